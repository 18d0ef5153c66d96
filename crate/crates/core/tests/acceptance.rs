//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! the single test fails if any criterion does. Criteria run sequentially in
//! one test so the timing-sensitive benchmark section owns the machine.

use rand::Rng;

use snkit_core::analysis::{
    connectivity_mask, count_flops, resnext_pointwise_share, unit_flops, unit_flops_counted,
    DependencyMask, StackLayer, UnitKind,
};
use snkit_core::arch::{build_comparison, build_shufflenet, NetworkSpec};
use snkit_core::bench::{run_benchmark, speedup_at};
use snkit_core::kernels::{channel_shuffle, channel_shuffle_perm, conv2d_fast, conv2d_naive, ConvSpec};
use snkit_core::model::{deserialize_model, serialize_model};
use snkit_core::units::ComparisonKind;
use snkit_core::util::{max_rel_err, random_tensor, random_weights, seeded_rng};

type CriterionResult = Result<String, String>;
type Criterion = (&'static str, fn() -> CriterionResult);

fn rel_err(actual: u64, expected: f64) -> f64 {
    (actual as f64 - expected).abs() / expected
}

fn mflops(spec: &NetworkSpec) -> Result<u64, String> {
    count_flops(spec, (224, 224))
        .map(|r| r.total_mult_adds)
        .map_err(|e| e.to_string())
}

/// Scale-1 totals match the published per-group complexity row within 2%.
fn c01_table1_complexity() -> CriterionResult {
    let expected = [
        (1usize, 143e6),
        (2, 140e6),
        (3, 137e6),
        (4, 133e6),
        (8, 137e6),
    ];
    let mut parts = Vec::new();
    for (g, want) in expected {
        let net = build_shufflenet(g, 1.0, false, 42).map_err(|e| e.to_string())?;
        let got = mflops(&net)?;
        let err = rel_err(got, want);
        if err > 0.02 {
            return Err(format!(
                "g={g}: {got} mult-adds is {:.2}% from {want:.0} (limit 2%)",
                err * 100.0
            ));
        }
        parts.push(format!("g={g} {:.1}M ({:+.2}%)", got as f64 / 1e6, (got as f64 - want) / want * 100.0));
    }
    Ok(parts.join(", "))
}

/// Scaled-model totals match the published figures at the stated tolerances.
fn c02_scaled_complexity() -> CriterionResult {
    let cases = [
        (3usize, 2.0f32, 524e6, 0.02),
        (3, 1.5, 292e6, 0.05),
        (8, 1.0, 140e6, 0.02),
        (4, 0.5, 38e6, 0.10),
        (8, 0.25, 13e6, 0.10),
    ];
    let mut parts = Vec::new();
    for (g, s, want, tol) in cases {
        let net = build_shufflenet(g, s, false, 42).map_err(|e| e.to_string())?;
        let got = mflops(&net)?;
        let err = rel_err(got, want);
        if err > tol {
            return Err(format!(
                "g={g} s={s}: {got} is {:.2}% from {want:.0} (limit {:.0}%)",
                err * 100.0,
                tol * 100.0
            ));
        }
        parts.push(format!("{s}x(g={g}) {:.1}M", got as f64 / 1e6));
    }
    Ok(parts.join(", "))
}

/// The three closed-form unit costs equal the per-layer counted costs as
/// integers on 100 random configurations, and the resnext pointwise share at
/// (c=256, m=128, g=32) is 93.4% within 0.05 points.
fn c03_closed_forms() -> CriterionResult {
    let mut rng = seeded_rng(0xC3);
    let groups = [1usize, 2, 3, 4, 8];
    for case in 0..100 {
        let g = groups[rng.random_range(0..groups.len())];
        let c = g * rng.random_range(1usize..=12);
        let m = g * rng.random_range(1usize..=12);
        let h = rng.random_range(1usize..=20);
        let w = rng.random_range(1usize..=20);
        for kind in [UnitKind::ResNet, UnitKind::ResNeXt, UnitKind::ShuffleNet] {
            let formula = unit_flops(kind, c, h, w, m, g).map_err(|e| e.to_string())?;
            let counted = unit_flops_counted(kind, c, h, w, m, g).map_err(|e| e.to_string())?;
            if formula != counted {
                return Err(format!(
                    "case {case}: {} formula {formula} != counted {counted} at c={c} m={m} h={h} w={w} g={g}",
                    kind.name()
                ));
            }
        }
    }
    let share = resnext_pointwise_share(256, 128, 32).map_err(|e| e.to_string())?;
    let scaled = resnext_pointwise_share(512, 256, 32).map_err(|e| e.to_string())?;
    if (share - scaled).abs() > 1e-12 {
        return Err(format!("share is not scale-consistent: {share} vs {scaled}"));
    }
    if (share * 100.0 - 93.4).abs() > 0.05 {
        return Err(format!("resnext pointwise share {:.4}% != 93.4% +-0.05", share * 100.0));
    }
    Ok(format!(
        "100 configs x 3 formulas integer-exact; resnext pointwise share {:.2}%",
        share * 100.0
    ))
}

/// Fast conv matches the naive oracle within relative 1e-4 over a matrix of
/// group/kernel/stride/depthwise configurations, at least 500 cases.
fn c04_conv_oracle() -> CriterionResult {
    let mut specs = Vec::new();
    for &g in &[1usize, 2, 3, 4, 8] {
        for &k in &[1usize, 3] {
            for &s in &[1usize, 2] {
                specs.push(ConvSpec {
                    in_channels: 4 * g,
                    out_channels: 4 * g,
                    kernel: k,
                    stride: s,
                    pad: if k == 3 { 1 } else { 0 },
                    groups: g,
                    depthwise: false,
                });
            }
        }
    }
    for &c in &[4usize, 8, 16] {
        for &s in &[1usize, 2] {
            specs.push(ConvSpec::depthwise3x3(c, s));
        }
    }
    let mut cases = 0usize;
    let mut worst = 0.0f32;
    for (i, spec) in specs.iter().enumerate() {
        for rep in 0..20u64 {
            let seed = 0xC4_00 + i as u64 * 100 + rep;
            let x = random_tensor(1, spec.in_channels, 11, 11, seed);
            let w = random_weights(spec.weight_len(), seed ^ 0xabcd);
            let naive = conv2d_naive(&x, &w, spec).map_err(|e| e.to_string())?;
            let fast = conv2d_fast(&x, &w, spec).map_err(|e| e.to_string())?;
            let err = max_rel_err(&fast, &naive);
            worst = worst.max(err);
            if err > 1e-4 {
                return Err(format!("rel err {err:.3e} > 1e-4 for {spec:?} rep={rep}"));
            }
            cases += 1;
        }
    }
    if cases < 500 {
        return Err(format!("only {cases} cases, need >= 500"));
    }
    Ok(format!("{cases} cases, worst rel err {worst:.2e}"))
}

/// Shuffle permutation algebra, exhaustive for c <= 64 and g | c.
fn c05_shuffle_algebra() -> CriterionResult {
    let mut cases = 0usize;
    for c in 1..=64usize {
        for g in 1..=c {
            if c % g != 0 {
                continue;
            }
            let perm = channel_shuffle_perm(c, g).map_err(|e| e.to_string())?;
            let mut sorted = perm.clone();
            sorted.sort_unstable();
            if sorted != (0..c).collect::<Vec<_>>() {
                return Err(format!("perm(c={c}, g={g}) is not a bijection"));
            }
            if g == 1 && perm != (0..c).collect::<Vec<_>>() {
                return Err(format!("perm(c={c}, g=1) is not the identity"));
            }
            let inverse = channel_shuffle_perm(c, c / g).map_err(|e| e.to_string())?;
            if (0..c).any(|i| perm[inverse[i]] != i) {
                return Err(format!("perm(c={c}, g={g}) then g={} is not the identity", c / g));
            }
            let x = random_tensor(1, c, 2, 2, 0xC5 ^ (c * 97 + g) as u64);
            let back = channel_shuffle(&channel_shuffle(&x, g).map_err(|e| e.to_string())?, c / g)
                .map_err(|e| e.to_string())?;
            if back != x {
                return Err(format!("tensor double shuffle (c={c}, g={g}) changed values"));
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} (c, g) pairs exhaustive"))
}

/// Two stacked grouped pointwise layers: block-diagonal without a shuffle,
/// fully related with one, for channel counts where channels/group >= groups.
fn c06_connectivity() -> CriterionResult {
    let mut checked = Vec::new();
    for &c in &[4usize, 8, 16, 36] {
        for &g in &[2usize, 4] {
            if c % g != 0 || c / g < g {
                continue; // full relation needs channels-per-group >= groups
            }
            let gconv = StackLayer::GroupedPointwise {
                in_channels: c,
                out_channels: c,
                groups: g,
            };
            let plain = connectivity_mask(&[gconv, gconv]).map_err(|e| e.to_string())?;
            if plain != DependencyMask::block_diagonal(c, c, g) {
                return Err(format!("(c={c}, g={g}) without shuffle is not block-diagonal"));
            }
            let shuffled = connectivity_mask(&[
                gconv,
                StackLayer::Shuffle {
                    channels: c,
                    groups: g,
                },
                gconv,
            ])
            .map_err(|e| e.to_string())?;
            if !shuffled.is_fully_connected() {
                return Err(format!("(c={c}, g={g}) with shuffle is not fully related"));
            }
            checked.push(format!("({c},{g})"));
        }
    }
    Ok(format!("pairs {}", checked.join(" ")))
}

/// At matched budgets, stage-4 widths order
/// vgg_like < resnet, resnext < xception_like < shuffle reference.
fn c07_width_ordering() -> CriterionResult {
    let mut parts = Vec::new();
    for (label, reference) in [
        ("140M", build_shufflenet(8, 1.0, false, 42).map_err(|e| e.to_string())?),
        ("38M", build_shufflenet(4, 0.5, false, 42).map_err(|e| e.to_string())?),
    ] {
        let width = |kind: ComparisonKind| -> Result<usize, String> {
            let b = build_comparison(kind, &reference).map_err(|e| e.to_string())?;
            Ok(*b.network.stage_widths().last().unwrap())
        };
        let vgg = width(ComparisonKind::VggLike)?;
        let resnet = width(ComparisonKind::ResNet)?;
        let resnext = width(ComparisonKind::ResNeXt)?;
        let xception = width(ComparisonKind::XceptionLike)?;
        let shuffle = *reference.stage_widths().last().unwrap();
        let ordered = vgg < resnet.min(resnext)
            && resnet.max(resnext) < xception
            && xception < shuffle;
        if !ordered {
            return Err(format!(
                "{label}: widths vgg={vgg} resnet={resnet} resnext={resnext} xception={xception} shuffle={shuffle} out of order"
            ));
        }
        parts.push(format!(
            "{label}: {vgg} < {resnet}~{resnext} < {xception} < {shuffle}"
        ));
    }
    Ok(parts.join("; "))
}

/// Benchmark properties: per-model time monotone in resolution, per-resolution
/// time monotone in mult-adds over the 0.5x/1x/2x g=3 family, and the
/// measured 2x-vs-0.5x speedup within [1, theoretical].
fn c08_benchmark_properties() -> CriterionResult {
    let resolutions = [(224usize, 224usize), (480, 640), (720, 1280)];
    let scales = [0.5f32, 1.0, 2.0];
    let mut reports = Vec::new();
    for &s in &scales {
        let net = build_shufflenet(3, s, false, 42).map_err(|e| e.to_string())?;
        let report = run_benchmark(&net, &resolutions, 3, 10).map_err(|e| e.to_string())?;
        report
            .check_resolution_monotonicity()
            .map_err(|e| format!("scale {s}: {e}"))?;
        reports.push(report);
    }
    for &(h, w) in &resolutions {
        let times: Vec<f64> = reports
            .iter()
            .map(|r| {
                r.rows
                    .iter()
                    .find(|row| row.height == h && row.width == w)
                    .map(|row| row.median_ms)
                    .unwrap()
            })
            .collect();
        if !(times[0] <= times[1] && times[1] <= times[2]) {
            return Err(format!(
                "at {h}x{w}, medians {times:?} not monotone across 0.5x/1x/2x"
            ));
        }
    }
    let sp = speedup_at(&reports[2], &reports[0], 224, 224).ok_or("missing 224x224 rows")?;
    if sp.measured < 1.0 || sp.measured > sp.theoretical {
        return Err(format!(
            "measured 2x-vs-0.5x speedup {:.2} outside [1, {:.2}]",
            sp.measured, sp.theoretical
        ));
    }
    Ok(format!(
        "monotone over 3 resolutions x 3 models; 2x-vs-0.5x measured {:.2}x vs theoretical {:.2}x",
        sp.measured, sp.theoretical
    ))
}

/// In every benchmark/complexity model family member, the least intense
/// pointwise layer still beats the most intense depthwise layer.
fn c09_depthwise_intensity() -> CriterionResult {
    let models = [
        (1usize, 1.0f32),
        (2, 1.0),
        (3, 1.0),
        (4, 1.0),
        (8, 1.0),
        (3, 0.5),
        (3, 1.5),
        (3, 2.0),
        (4, 0.5),
    ];
    let mut worst_margin = f64::INFINITY;
    for (g, s) in models {
        let net = build_shufflenet(g, s, false, 42).map_err(|e| e.to_string())?;
        let report = count_flops(&net, (224, 224)).map_err(|e| e.to_string())?;
        let min_pw = report
            .rows
            .iter()
            .filter(|r| r.kind.ends_with("conv1x1"))
            .map(|r| r.intensity)
            .fold(f64::INFINITY, f64::min);
        let max_dw = report
            .rows
            .iter()
            .filter(|r| r.kind == "dwconv3x3")
            .map(|r| r.intensity)
            .fold(0.0f64, f64::max);
        if min_pw <= max_dw {
            return Err(format!(
                "g={g} s={s}: min 1x1 intensity {min_pw:.3} <= max depthwise {max_dw:.3}"
            ));
        }
        worst_margin = worst_margin.min(min_pw / max_dw);
    }
    Ok(format!(
        "{} models, tightest pointwise/depthwise intensity ratio {:.2}",
        models.len(),
        worst_margin
    ))
}

/// serialize(deserialize(serialize(net))) is byte-identical across the
/// whole group x scale grid.
fn c10_serialization() -> CriterionResult {
    let mut count = 0usize;
    for &g in &[1usize, 2, 3, 4, 8] {
        for &s in &[0.25f32, 0.5, 1.0, 1.5, 2.0] {
            let net = build_shufflenet(g, s, false, 42).map_err(|e| e.to_string())?;
            let bytes = serialize_model(&net).map_err(|e| e.to_string())?;
            let restored = deserialize_model(&bytes).map_err(|e| e.to_string())?;
            let again = serialize_model(&restored).map_err(|e| e.to_string())?;
            if again != bytes {
                return Err(format!("g={g} s={s}: re-serialized bytes differ"));
            }
            count += 1;
        }
    }
    Ok(format!("{count} builds byte-identical after round trip"))
}

#[test]
fn acceptance_criteria() {
    let criteria: &[Criterion] = &[
        ("01 table1-complexity", c01_table1_complexity),
        ("02 scaled-complexity", c02_scaled_complexity),
        ("03 closed-form-units", c03_closed_forms),
        ("04 conv-oracle", c04_conv_oracle),
        ("05 shuffle-algebra", c05_shuffle_algebra),
        ("06 connectivity", c06_connectivity),
        ("07 width-ordering", c07_width_ordering),
        ("08 benchmark-properties", c08_benchmark_properties),
        ("09 depthwise-intensity", c09_depthwise_intensity),
        ("10 serialization", c10_serialization),
    ];
    let mut failures = Vec::new();
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(reason) => {
                println!("FAIL criterion {name}: {reason}");
                failures.push(*name);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
