use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::Array2;
use tdgr::diffusion::{generate_batch, train_denoiser, Denoiser, DiffusionSchedule};
use tdgr::engine::PolicyNet;
use tdgr::nn::{mse_loss_grad, AdamConfig, AdamState};
use tdgr::pathworld::{make_task, rollout_batch, TaskParams};
use tdgr::rng::SeedTree;
use tdgr_bench::mlp_fixture;

fn mlp(c: &mut Criterion) {
    let (net, x) = mlp_fixture(128, 32);
    let y = Array2::zeros((32, 2));
    c.bench_function("mlp_forward_128x3_b32", |b| b.iter(|| net.forward(x.view())));
    c.bench_function("mlp_loss_grad_128x3_b32", |b| b.iter(|| mse_loss_grad(&net, x.view(), y.view())));
}

fn diffusion(c: &mut Criterion) {
    let mut rng = SeedTree::new(1).rng();
    let sched = DiffusionSchedule::cosine(100).unwrap();
    let denoiser = Denoiser::new(7, 16, &[128, 128, 128], &mut rng).unwrap();
    let x0 = Array2::from_shape_fn((256, 7), |(i, j)| ((i + j) as f64).cos());
    let js: Vec<usize> = (0..256).map(|i| i % 100 + 1).collect();
    c.bench_function("denoiser_10_train_steps_b32", |b| {
        b.iter_batched(
            || (denoiser.clone(), AdamState::new(AdamConfig::default(), &denoiser.net), SeedTree::new(2).rng()),
            |(mut d, mut adam, mut rng)| train_denoiser(&mut d, &mut adam, x0.view(), &js, 10, 32, &sched, &mut rng).unwrap(),
            BatchSize::SmallInput,
        )
    });
    let batch: Vec<usize> = (1..=100).collect();
    c.bench_function("generate_100_samples_T100", |b| {
        b.iter_batched(|| SeedTree::new(3).rng(), |mut rng| generate_batch(&denoiser, &batch, &sched, &mut rng).unwrap(), BatchSize::SmallInput)
    });
}

fn rollouts(c: &mut Criterion) {
    let task = make_task(0, 7, &TaskParams::default()).unwrap();
    let policy = PolicyNet::new(5, &[64, 64, 64], 0.03, &mut SeedTree::new(4).rng()).unwrap();
    c.bench_function("rollout_100_episodes_L100", |b| {
        b.iter_batched(|| SeedTree::new(5).rng(), |mut rng| rollout_batch(&policy, &task, 100, &mut rng), BatchSize::SmallInput)
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = mlp, diffusion, rollouts
}
criterion_main!(benches);
