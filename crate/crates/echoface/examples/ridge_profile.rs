use echoface::dataset::SessionFeatures;
use echoface::linalg::{accumulate_gram_upper, cholesky_in_place, mirror_upper_to_lower, solve_cholesky};
use echoface::ridge::{session_gram, train_ridge_from_grams, RidgeOptions, TargetSelection};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n_frames = 400;
    let features = SessionFeatures {
        session_id: "p".into(),
        diffs: Array2::from_shape_fn((60, n_frames - 1), |_| rng.gen_range(-1.0..1.0)),
        targets: Array2::from_shape_fn((n_frames, 52), |_| rng.gen_range(0.0..1000.0)),
    };
    let opts = RidgeOptions::default();

    let t = Instant::now();
    let gram = session_gram(&features, &opts, &TargetSelection::All);
    eprintln!("session_gram: {:.2}s", t.elapsed().as_secs_f64());

    let t = Instant::now();
    let model = train_ridge_from_grams(&[&gram], opts.lambda).unwrap();
    eprintln!("train_from_grams total: {:.2}s", t.elapsed().as_secs_f64());
    eprintln!("bias[0] = {:.3}", model.bias[0]);

    // Phase timing on a raw 5041 system.
    let d = 5041;
    let x = Array2::from_shape_fn((512, d), |_| rng.gen_range(-1.0..1.0));
    let mut a = Array2::zeros((d, d));
    let t = Instant::now();
    for _ in 0..4 {
        accumulate_gram_upper(&mut a, &x.view());
    }
    eprintln!("gram 4x512 rows: {:.2}s", t.elapsed().as_secs_f64());
    mirror_upper_to_lower(&mut a);
    for i in 0..d {
        a[[i, i]] += 100.0;
    }
    let t = Instant::now();
    cholesky_in_place(&mut a).unwrap();
    eprintln!("cholesky: {:.2}s", t.elapsed().as_secs_f64());
    let b = Array2::from_shape_fn((d, 53), |_| rng.gen_range(-1.0..1.0));
    let t = Instant::now();
    let _x = solve_cholesky(&a, &b);
    eprintln!("solve: {:.2}s", t.elapsed().as_secs_f64());
}
