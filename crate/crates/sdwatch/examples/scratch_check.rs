use sdwatch::montecarlo::{run_sweep, SweepConfig};

fn main() {
    let cfg = SweepConfig::new(vec![50_000], 400, 12345);
    let result = run_sweep(&cfg).unwrap();
    let row = &result.rows[0];
    println!(
        "n=50000 trials=400: mean={:.1} std={:.1} failures={} ratio={:.4}",
        row.mean_delay_bits,
        row.std_delay_bits,
        row.failures,
        row.mean_delay_bits / 50_000.0
    );
}
