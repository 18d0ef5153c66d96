//! Self-check suites behind `snkit verify`: oracle equivalences and golden
//! structural masks, with hidden fault injection to prove the harness can
//! actually fail.

use snkit_core::analysis::{connectivity_mask, DependencyMask, StackLayer};
use snkit_core::kernels::{
    add_channel_bias, bn_apply, channel_shuffle, channel_shuffle_perm, conv2d_fast, conv2d_naive,
    fold_bn, BnParams, ConvSpec,
};
use snkit_core::util::{max_rel_err, random_tensor, random_weights, seeded_rng};
use snkit_core::Tensor;

use rand::Rng;

/// Deliberate defects for harness sanity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Rotate the shuffle permutation by one before checking it.
    ShufflePerm,
    /// Scale one element of the fast conv output.
    ConvFast,
    /// Offset the folded bias.
    BnFold,
}

impl Fault {
    pub fn parse(s: &str) -> Option<Fault> {
        match s {
            "shuffle-perm" => Some(Fault::ShufflePerm),
            "conv-fast" => Some(Fault::ConvFast),
            "bn-fold" => Some(Fault::BnFold),
            _ => None,
        }
    }
}

pub struct SuiteResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl SuiteResult {
    fn new(name: &'static str) -> Self {
        SuiteResult {
            name,
            cases: 0,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures.push(describe());
        }
    }
}

pub const SUITE_NAMES: &[&str] = &["tensor", "shuffle", "conv", "bn", "connectivity"];

/// Runs the selected suites (all when `filter` is None). Cases are ordered
/// smallest-first so the first reported failure is already minimal.
pub fn run_suites(filter: Option<&str>, seed: u64, fault: Option<Fault>) -> Vec<SuiteResult> {
    let mut results = Vec::new();
    let run = |name: &str| filter.map(|f| f == name).unwrap_or(true);
    if run("tensor") {
        results.push(tensor_suite(seed));
    }
    if run("shuffle") {
        results.push(shuffle_suite(seed, fault));
    }
    if run("conv") {
        results.push(conv_suite(seed, fault));
    }
    if run("bn") {
        results.push(bn_suite(seed, fault));
    }
    if run("connectivity") {
        results.push(connectivity_suite());
    }
    results
}

fn tensor_suite(seed: u64) -> SuiteResult {
    let mut s = SuiteResult::new("tensor");
    for case in 0..32u64 {
        let mut rng = seeded_rng(seed ^ (0x7e45 + case));
        let c = rng.random_range(2usize..10);
        let h = rng.random_range(1usize..6);
        let w = rng.random_range(1usize..6);
        let x = random_tensor(1, c, h, w, seed ^ case);
        for k in 1..c {
            let lo = x.slice_channels(0, k).unwrap();
            let hi = x.slice_channels(k, c).unwrap();
            s.check(lo.concat_channels(&hi).unwrap() == x, || {
                format!("slice/concat roundtrip failed at c={c} h={h} w={w} k={k} seed={seed}")
            });
        }
        let y = random_tensor(1, c, h, w, seed ^ (case + 1000));
        s.check(
            x.add_elementwise(&y).unwrap() == y.add_elementwise(&x).unwrap(),
            || format!("add commutativity failed at c={c} h={h} w={w} seed={seed}"),
        );
    }
    s
}

fn shuffle_oracle(c: usize, g: usize) -> Vec<usize> {
    // Reshape to (g, n), transpose to (n, g), flatten.
    let n = c / g;
    let mut matrix = vec![vec![0usize; n]; g];
    let mut idx = 0;
    for row in matrix.iter_mut() {
        for v in row.iter_mut() {
            *v = idx;
            idx += 1;
        }
    }
    let mut flat = Vec::with_capacity(c);
    for col in 0..n {
        for row in matrix.iter() {
            flat.push(row[col]);
        }
    }
    flat
}

fn shuffle_suite(seed: u64, fault: Option<Fault>) -> SuiteResult {
    let mut s = SuiteResult::new("shuffle");
    for c in 1..=64usize {
        for g in 1..=c {
            if c % g != 0 {
                continue;
            }
            let mut perm = channel_shuffle_perm(c, g).unwrap();
            if fault == Some(Fault::ShufflePerm) && c > 1 {
                perm.rotate_left(1);
            }
            s.check(perm == shuffle_oracle(c, g), || {
                format!("perm(c={c}, g={g}) does not match the reshape-transpose oracle")
            });
            let mut sorted = perm.clone();
            sorted.sort_unstable();
            s.check(sorted == (0..c).collect::<Vec<_>>(), || {
                format!("perm(c={c}, g={g}) is not a bijection")
            });
            if g == 1 {
                s.check(perm == (0..c).collect::<Vec<_>>(), || {
                    format!("perm(c={c}, g=1) is not the identity")
                });
            }
        }
    }
    // Double-shuffle inversion on values, a few small tensors.
    for (c, g) in [(4usize, 2usize), (6, 3), (12, 4), (24, 8)] {
        let x = random_tensor(1, c, 3, 3, seed ^ (c * 131 + g) as u64);
        let y = channel_shuffle(&channel_shuffle(&x, g).unwrap(), c / g).unwrap();
        s.check(y == x, || {
            format!("double shuffle (c={c}, g={g}) is not the identity")
        });
    }
    s
}

fn conv_suite(seed: u64, fault: Option<Fault>) -> SuiteResult {
    let mut s = SuiteResult::new("conv");
    let mut specs: Vec<ConvSpec> = Vec::new();
    for &g in &[1usize, 2, 3, 4, 8] {
        for &k in &[1usize, 3] {
            for &stride in &[1usize, 2] {
                specs.push(ConvSpec {
                    in_channels: 4 * g,
                    out_channels: 4 * g,
                    kernel: k,
                    stride,
                    pad: if k == 3 { 1 } else { 0 },
                    groups: g,
                    depthwise: false,
                });
            }
        }
    }
    for &c in &[4usize, 8, 12] {
        for &stride in &[1usize, 2] {
            specs.push(ConvSpec::depthwise3x3(c, stride));
        }
    }
    // Smallest workloads first so a failure report is already minimal.
    specs.sort_by_key(|sp| sp.weight_len());

    for (i, spec) in specs.iter().enumerate() {
        for case in 0..20u64 {
            let x = random_tensor(1, spec.in_channels, 9, 9, seed ^ (i as u64 * 100 + case));
            let w = random_weights(spec.weight_len(), seed ^ (i as u64 * 100 + case + 1));
            let naive = conv2d_naive(&x, &w, spec).unwrap();
            let mut fast = conv2d_fast(&x, &w, spec).unwrap();
            if fault == Some(Fault::ConvFast) {
                let v = fast.data()[0] * 1.001 + 1e-3;
                let (n, c, h, wd) = fast.shape();
                let mut data = fast.into_data();
                data[0] = v;
                fast = Tensor::new(n, c, h, wd, data).unwrap();
            }
            let err = max_rel_err(&fast, &naive);
            s.check(err <= 1e-4, || {
                format!("fast-vs-naive rel err {err:.3e} > 1e-4 for {spec:?}, seed={seed}, case={case}")
            });
        }
    }
    s
}

fn bn_suite(seed: u64, fault: Option<Fault>) -> SuiteResult {
    let mut s = SuiteResult::new("bn");
    for case in 0..40u64 {
        let mut rng = seeded_rng(seed ^ (0xb4 + case));
        let c_out = rng.random_range(1usize..8);
        let c_in = rng.random_range(1usize..6);
        let spec = ConvSpec {
            in_channels: c_in,
            out_channels: c_out,
            kernel: 1,
            stride: 1,
            pad: 0,
            groups: 1,
            depthwise: false,
        };
        let x = random_tensor(1, c_in, 5, 5, seed ^ (case + 7));
        let w = random_weights(spec.weight_len(), seed ^ (case + 8));
        let bn = BnParams {
            gamma: (0..c_out).map(|_| rng.random_range(0.5f32..1.5)).collect(),
            beta: (0..c_out).map(|_| rng.random_range(-0.5f32..0.5)).collect(),
            running_mean: (0..c_out).map(|_| rng.random_range(-0.5f32..0.5)).collect(),
            running_var: (0..c_out).map(|_| rng.random_range(0.5f32..1.5)).collect(),
            epsilon: 1e-5,
        };
        let unfolded = bn_apply(&conv2d_naive(&x, &w, &spec).unwrap(), &bn).unwrap();
        let (wf, mut bf) = fold_bn(&w, &vec![0.0; c_out], &bn, c_out).unwrap();
        if fault == Some(Fault::BnFold) {
            bf[0] += 1e-3;
        }
        let folded = add_channel_bias(&conv2d_naive(&x, &wf, &spec).unwrap(), &bf).unwrap();
        let worst = folded
            .data()
            .iter()
            .zip(unfolded.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        s.check(worst <= 1e-5, || {
            format!("bn folding abs err {worst:.3e} > 1e-5 at c_in={c_in} c_out={c_out} seed={seed} case={case}")
        });
    }
    s
}

fn connectivity_suite() -> SuiteResult {
    let mut s = SuiteResult::new("connectivity");
    for &(c, g) in &[(4usize, 2usize), (8, 2), (16, 2), (16, 4), (36, 2), (36, 4)] {
        let gconv = StackLayer::GroupedPointwise {
            in_channels: c,
            out_channels: c,
            groups: g,
        };
        let plain = connectivity_mask(&[gconv, gconv]).unwrap();
        s.check(plain == DependencyMask::block_diagonal(c, c, g), || {
            format!("stacked grouped convs (c={c}, g={g}) are not block-diagonal")
        });
        let shuffled = connectivity_mask(&[
            gconv,
            StackLayer::Shuffle {
                channels: c,
                groups: g,
            },
            gconv,
        ])
        .unwrap();
        s.check(shuffled.is_fully_connected(), || {
            format!("shuffled grouped convs (c={c}, g={g}) are not fully related")
        });
    }
    let dense = connectivity_mask(&[StackLayer::GroupedPointwise {
        in_channels: 6,
        out_channels: 10,
        groups: 1,
    }])
    .unwrap();
    s.check(dense.is_fully_connected(), || {
        "dense 1x1 mask is not fully related".into()
    });
    s
}
