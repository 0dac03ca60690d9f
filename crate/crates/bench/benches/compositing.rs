use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use linelab::exact::{render_fragment_lists, SortKey, Sorter};
use linelab::geometry::SynthKind;
use linelab::mboit::{mboit_render, MboitParams};
use linelab::mlab::{mlab_render, mlabdb_render, MlabParams, MlabdbParams};
use linelab::rasterize;
use linelab::scenes::{default_camera, Regime, Scene, WHITE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sorters(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let list: Vec<SortKey> = (0..124u32)
        .map(|submission| SortKey {
            depth: rng.gen(),
            submission,
        })
        .collect();
    let mut g = c.benchmark_group("sort_124");
    for s in Sorter::ALL {
        g.bench_function(s.name(), |b| {
            b.iter_batched_ref(|| list.clone(), |v| s.sort(black_box(v)), BatchSize::SmallInput)
        });
    }
    g.finish();
}

fn compositors(c: &mut Criterion) {
    let scene = Scene::standard(SynthKind::HelixBundle);
    let mesh = scene.mesh().unwrap();
    let cam = default_camera(&scene.bounds(), 160, 90).unwrap();
    let tf = Regime::Semi.transfer_function();
    c.bench_function("rasterize_helix", |b| b.iter(|| rasterize(&mesh, &cam, &tf)));

    let fb = rasterize(&mesh, &cam, &tf);
    let mut g = c.benchmark_group("composite_helix");
    g.sample_size(20);
    g.bench_function("ll-heap", |b| {
        b.iter(|| render_fragment_lists(&fb, WHITE, Sorter::Heap))
    });
    g.bench_function("mlab", |b| {
        b.iter(|| mlab_render(&fb, WHITE, MlabParams::default()).unwrap())
    });
    g.bench_function("mlabdb", |b| {
        b.iter(|| mlabdb_render(&fb, WHITE, MlabdbParams::default()).unwrap())
    });
    g.bench_function("mboit", |b| {
        b.iter(|| mboit_render(&fb, WHITE, MboitParams::default(), cam.near, cam.far))
    });
    g.finish();
}

criterion_group!(benches, sorters, compositors);
criterion_main!(benches);
