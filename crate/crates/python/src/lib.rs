//! Python extension module exposing the core tensor type, the network
//! builders and the static analyzers. Build with
//! `cargo build --release -p snkit-python`; `python/smoke_test.py` imports
//! the resulting cdylib directly.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use snkit_core::analysis::{
    connectivity_mask, count_flops, StackLayer, UnitKind,
};
use snkit_core::arch::{build_comparison, build_shufflenet, NetworkSpec};
use snkit_core::bench::run_benchmark;
use snkit_core::error::Error as CoreError;
use snkit_core::kernels;
use snkit_core::model::{load_model, save_model};
use snkit_core::units::ComparisonKind;
use snkit_core::util::random_tensor;

fn to_py(e: CoreError) -> PyErr {
    match e {
        CoreError::Io(_) | CoreError::CorruptModel(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Dense NCHW float tensor.
#[pyclass]
struct Tensor {
    inner: snkit_core::Tensor,
}

#[pymethods]
impl Tensor {
    #[new]
    fn new(shape: (usize, usize, usize, usize), data: Vec<f32>) -> PyResult<Self> {
        let (n, c, h, w) = shape;
        Ok(Tensor {
            inner: snkit_core::Tensor::new(n, c, h, w, data).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn zeros(n: usize, c: usize, h: usize, w: usize) -> PyResult<Self> {
        Ok(Tensor {
            inner: snkit_core::Tensor::zeros(n, c, h, w).map_err(to_py)?,
        })
    }

    /// Seeded uniform values in [-1, 1); reproducible across runs.
    #[staticmethod]
    fn random(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Self {
        Tensor {
            inner: random_tensor(n, c, h, w, seed),
        }
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize, usize) {
        self.inner.shape()
    }

    fn tolist(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn channel_shuffle(&self, groups: usize) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: kernels::channel_shuffle(&self.inner, groups).map_err(to_py)?,
        })
    }

    fn concat_channels(&self, other: &Tensor) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: self.inner.concat_channels(&other.inner).map_err(to_py)?,
        })
    }

    fn add_elementwise(&self, other: &Tensor) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: self.inner.add_elementwise(&other.inner).map_err(to_py)?,
        })
    }

    fn slice_channels(&self, lo: usize, hi: usize) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: self.inner.slice_channels(lo, hi).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        let (n, c, h, w) = self.inner.shape();
        format!("Tensor(shape=({n}, {c}, {h}, {w}))")
    }
}

/// A built network with materialized weights.
#[pyclass]
struct Network {
    inner: NetworkSpec,
}

#[pymethods]
impl Network {
    /// Builds the shuffle-unit architecture.
    #[staticmethod]
    #[pyo3(signature = (groups=3, scale=1.0, shallow=false, seed=42))]
    fn shufflenet(groups: usize, scale: f32, shallow: bool, seed: u64) -> PyResult<Self> {
        Ok(Network {
            inner: build_shufflenet(groups, scale, shallow, seed).map_err(to_py)?,
        })
    }

    /// Builds a comparison structure matched to `reference`'s budget;
    /// returns the network and the achieved relative budget error.
    #[staticmethod]
    fn comparison(kind: &str, reference: &Network) -> PyResult<(Network, f64)> {
        let kind = ComparisonKind::parse(kind).map_err(to_py)?;
        let built = build_comparison(kind, &reference.inner).map_err(to_py)?;
        Ok((
            Network {
                inner: built.network,
            },
            built.rel_err,
        ))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Network {
            inner: load_model(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_model(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    fn forward(&self, x: &Tensor) -> PyResult<Tensor> {
        Ok(Tensor {
            inner: self.inner.forward(&x.inner).map_err(to_py)?,
        })
    }

    /// Total conv + fc mult-adds at the given input resolution.
    fn flops(&self, h: usize, w: usize) -> PyResult<u64> {
        Ok(count_flops(&self.inner, (h, w))
            .map_err(to_py)?
            .total_mult_adds)
    }

    fn cost_json(&self, h: usize, w: usize) -> PyResult<String> {
        Ok(count_flops(&self.inner, (h, w)).map_err(to_py)?.to_json())
    }

    fn cost_csv(&self, h: usize, w: usize) -> PyResult<String> {
        Ok(count_flops(&self.inner, (h, w)).map_err(to_py)?.to_csv())
    }

    fn stage_widths(&self) -> Vec<usize> {
        self.inner.stage_widths()
    }

    fn unit_count(&self) -> usize {
        self.inner.unit_count()
    }

    fn weighted_layer_count(&self) -> usize {
        self.inner.weighted_layer_count()
    }

    /// Single-thread benchmark; returns the report as a JSON string.
    #[pyo3(signature = (resolutions, warmup=10, iters=50))]
    fn bench(
        &self,
        resolutions: Vec<(usize, usize)>,
        warmup: usize,
        iters: usize,
    ) -> PyResult<String> {
        Ok(run_benchmark(&self.inner, &resolutions, warmup, iters)
            .map_err(to_py)?
            .to_json())
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(name='{}', units={}, weighted_layers={})",
            self.inner.name(),
            self.inner.unit_count(),
            self.inner.weighted_layer_count()
        )
    }
}

/// Permutation sending output channel i to input channel (i % g) * (c/g) + i/g.
#[pyfunction]
fn channel_shuffle_perm(channels: usize, groups: usize) -> PyResult<Vec<usize>> {
    kernels::channel_shuffle_perm(channels, groups).map_err(to_py)
}

/// Closed-form stride-1 unit mult-adds; kind is resnet, resnext or shufflenet.
#[pyfunction]
fn unit_flops(kind: &str, c: usize, h: usize, w: usize, m: usize, g: usize) -> PyResult<u64> {
    snkit_core::analysis::unit_flops(UnitKind::parse(kind).map_err(to_py)?, c, h, w, m, g)
        .map_err(to_py)
}

/// Per-layer mult-adds of one stride-2 shuffle unit.
#[pyfunction]
fn unit_flops_stride2(
    c: usize,
    o: usize,
    h: usize,
    w: usize,
    m: usize,
    g: usize,
    first_pw_grouped: bool,
) -> PyResult<u64> {
    snkit_core::analysis::unit_flops_stride2(c, o, h, w, m, g, first_pw_grouped).map_err(to_py)
}

/// Reachability matrix of two stacked grouped pointwise layers over c
/// channels, optionally with a channel shuffle between them.
#[pyfunction]
fn connectivity(c: usize, groups: usize, with_shuffle: bool) -> PyResult<Vec<Vec<bool>>> {
    let gconv = StackLayer::GroupedPointwise {
        in_channels: c,
        out_channels: c,
        groups,
    };
    let stack: Vec<StackLayer> = if with_shuffle {
        vec![
            gconv,
            StackLayer::Shuffle {
                channels: c,
                groups,
            },
            gconv,
        ]
    } else {
        vec![gconv, gconv]
    };
    let mask = connectivity_mask(&stack).map_err(to_py)?;
    Ok((0..mask.out_channels)
        .map(|o| (0..mask.in_channels).map(|i| mask.get(o, i)).collect())
        .collect())
}

#[pymodule]
fn snkit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Tensor>()?;
    m.add_class::<Network>()?;
    m.add_function(wrap_pyfunction!(channel_shuffle_perm, m)?)?;
    m.add_function(wrap_pyfunction!(unit_flops, m)?)?;
    m.add_function(wrap_pyfunction!(unit_flops_stride2, m)?)?;
    m.add_function(wrap_pyfunction!(connectivity, m)?)?;
    Ok(())
}
