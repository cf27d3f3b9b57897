use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use wet_bench::fixture;
use wet_core::precoding::{design, DesignSettings, Method, PrecoderInput};

fn precoders(c: &mut Criterion) {
    let settings = DesignSettings::default();
    let mut group = c.benchmark_group("precoder");
    group.sample_size(10);
    for (ues, pbs) in [(1, 8), (2, 8), (3, 16)] {
        let fx = fixture(ues, pbs, 4).expect("fixture");
        let input = PrecoderInput {
            channels: &fx.channels,
            antennas_per_pb: fx.antennas_per_pb,
            deltas: &fx.deltas,
            p_max: Some(100.0),
            emf: None,
        };
        let mut methods = vec![Method::Sdp, Method::Sca, Method::Mrt];
        if ues == 1 {
            methods.push(Method::SingleUe);
        }
        for method in methods {
            group.bench_with_input(BenchmarkId::new(method.to_string(), format!("K{ues}_N{pbs}")), &input, |b, input| {
                b.iter(|| design(method, input, &settings).expect("design"))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, precoders);
criterion_main!(benches);
