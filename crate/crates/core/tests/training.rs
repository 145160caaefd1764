use ntn_twin::experiment::{collect_dataset, init_allocator};
use ntn_twin::nn::{accuracy, grad_check, mean_loss, train, Mlp};
use ntn_twin::scenario::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TINY: &str = r#"
seed = 11
[users]
embb = 2
urllc = 1
[grid]
num_rbs = 4
rb_bandwidth = 1e5
[traffic]
schedule = "uniform"
lambda_low = 5.0
lambda_high = 15.0
[nn]
hidden = [64, 32]
learning_rate = 0.01
epochs = 60
batch_size = 16
train_slots = 2000
train_episodes = 4
train_lambda_low = 5.0
train_lambda_high = 15.0
ref_lambda = 10.0
"#;

#[test]
fn tiny_scenario_imitates_the_exhaustive_oracle() {
    let scenario = Scenario::parse(TINY).unwrap();
    let data = collect_dataset(&scenario, 2000, 4, scenario.seed()).unwrap();
    let (fit, held_out) = data.split_at(1600);
    let mut allocator = init_allocator(&scenario).unwrap();
    let report = train(&mut allocator.net, &fit, &scenario.train_config()).unwrap();
    let train_acc = accuracy(&allocator.net, &fit).unwrap();
    let test_acc = accuracy(&allocator.net, &held_out).unwrap();
    assert!(report.losses.last().unwrap() < &report.losses[0]);
    assert!(train_acc >= 0.90, "train agreement {train_acc}");
    assert!(test_acc >= 0.85, "held-out agreement {test_acc}");
}

#[test]
fn training_is_deterministic() {
    let mut text = TINY.replace("epochs = 60", "epochs = 2");
    text = text.replace("train_slots = 2000", "train_slots = 200");
    let scenario = Scenario::parse(&text).unwrap();
    let data = collect_dataset(&scenario, 200, 4, 3).unwrap();
    let run = || {
        let mut a = init_allocator(&scenario).unwrap();
        let r = train(&mut a.net, &data, &scenario.train_config()).unwrap();
        (a.net.params(), r.losses)
    };
    assert_eq!(run(), run());
}

#[test]
fn gradients_match_finite_differences_on_random_nets() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..20 {
        let net = Mlp::glorot(&[4, 5, 6], 3, seed).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels = [Some(rng.random_range(0..3)), Some(rng.random_range(0..3))];
        let err = grad_check(&net, &x, &labels).unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn zero_net_starts_at_uniform_cross_entropy() {
    let scenario = Scenario::parse(TINY).unwrap();
    let data = collect_dataset(&scenario, 50, 1, 1).unwrap();
    let sizes = init_allocator(&scenario).unwrap().net.sizes().to_vec();
    let net = Mlp::zeros(&sizes, 3).unwrap();
    let expected = 4.0 * 3f64.ln();
    assert!((mean_loss(&net, &data).unwrap() - expected).abs() < 1e-9);
}
