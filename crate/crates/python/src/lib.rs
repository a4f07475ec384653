//! Python bindings for storage bid construction, withholding bounds and the
//! market simulator.

use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use storage_bidding::bids::{bids_from_series, BidCurve};
use storage_bidding::distribution::PriceDistribution;
use storage_bidding::engine::{backward_induction, EngineConfig, ExpectationMethod, ValueSeries};
use storage_bidding::error::Error;
use storage_bidding::experiments::sigma_sweep as sweep_sigmas;
use storage_bidding::market::{simulate_day, Scenario};
use storage_bidding::model::{PriceBounds, StorageSpec};
use storage_bidding::value::ValueFunction;
use storage_bidding::withholding::withholding_bound as bound_at;

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.exit_code() {
        2 => PyRuntimeError::new_err(format!("infeasible: {msg}")),
        3 => PyArithmeticError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn engine(soc_points: usize, quadrature_nodes: Option<usize>) -> EngineConfig {
    EngineConfig {
        soc_points,
        expectation: match quadrature_nodes {
            Some(nodes) => ExpectationMethod::GaussLegendre { nodes },
            None => ExpectationMethod::Analytic,
        },
    }
}

/// Storage unit: power, energy, one-way efficiency and discharge cost.
#[pyclass(name = "StorageSpec", frozen, from_py_object)]
#[derive(Clone)]
struct PyStorageSpec(StorageSpec);

#[pymethods]
impl PyStorageSpec {
    #[new]
    #[pyo3(signature = (power_mw, energy_mwh, efficiency, discharge_cost, step_hours = 1.0))]
    fn new(power_mw: f64, energy_mwh: f64, efficiency: f64, discharge_cost: f64, step_hours: f64) -> PyResult<Self> {
        StorageSpec::new(power_mw, energy_mwh, efficiency, discharge_cost, step_hours)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn power_mw(&self) -> f64 {
        self.0.power_mw()
    }
    #[getter]
    fn energy_mwh(&self) -> f64 {
        self.0.energy_mwh()
    }
    #[getter]
    fn efficiency(&self) -> f64 {
        self.0.efficiency()
    }
    #[getter]
    fn discharge_cost(&self) -> f64 {
        self.0.discharge_cost()
    }
    #[getter]
    fn step_hours(&self) -> f64 {
        self.0.step_hours()
    }

    /// SoC after one period of `discharge_mw` or `charge_mw`.
    fn next_soc(&self, soc: f64, discharge_mw: f64, charge_mw: f64) -> f64 {
        self.0.next_soc(soc, discharge_mw, charge_mw)
    }

    fn __repr__(&self) -> String {
        format!(
            "StorageSpec(power_mw={}, energy_mwh={}, efficiency={}, discharge_cost={}, step_hours={})",
            self.0.power_mw(),
            self.0.energy_mwh(),
            self.0.efficiency(),
            self.0.discharge_cost(),
            self.0.step_hours()
        )
    }
}

/// Price forecast for one period.
#[pyclass(name = "PriceDistribution", frozen, from_py_object)]
#[derive(Clone)]
struct PyDistribution(PriceDistribution);

fn limits(bounds: Option<(f64, f64)>) -> PyResult<Option<PriceBounds>> {
    bounds.map(|(lo, hi)| PriceBounds::new(lo, hi).map_err(py_err)).transpose()
}

#[pymethods]
impl PyDistribution {
    #[staticmethod]
    fn point_mass(price: f64) -> PyResult<Self> {
        PriceDistribution::point_mass(price).map(Self).map_err(py_err)
    }

    /// Gaussian, truncated to `bounds=(floor, cap)` when given.
    #[staticmethod]
    #[pyo3(signature = (mean, std_dev, bounds = None))]
    fn gaussian(mean: f64, std_dev: f64, bounds: Option<(f64, f64)>) -> PyResult<Self> {
        PriceDistribution::gaussian(mean, std_dev, limits(bounds)?).map(Self).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (mean, std_dev, bounds = None))]
    fn bounded_uniform(mean: f64, std_dev: f64, bounds: Option<(f64, f64)>) -> PyResult<Self> {
        PriceDistribution::bounded_uniform(mean, std_dev, limits(bounds)?).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn two_point(high: f64, low: f64, high_prob: f64) -> PyResult<Self> {
        PriceDistribution::two_point(high, low, high_prob).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn empirical(samples: Vec<f64>) -> PyResult<Self> {
        PriceDistribution::empirical(samples).map(Self).map_err(py_err)
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn std_dev(&self) -> f64 {
        self.0.std_dev()
    }

    fn support(&self) -> (f64, f64) {
        self.0.support()
    }

    fn cdf(&self, x: f64) -> f64 {
        self.0.cdf(x)
    }

    /// `n` reproducible draws.
    fn sample(&self, seed: u64, n: usize) -> Vec<f64> {
        self.0.sample_n(seed, n)
    }

    fn __repr__(&self) -> String {
        format!("PriceDistribution({:?}, mean={}, std_dev={})", self.0.kind(), self.0.mean(), self.0.std_dev())
    }
}

/// Concave piecewise-linear value of stored energy.
#[pyclass(name = "ValueFunction", frozen, from_py_object)]
#[derive(Clone)]
struct PyValueFunction(ValueFunction);

#[pymethods]
impl PyValueFunction {
    #[new]
    fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> PyResult<Self> {
        ValueFunction::new(breakpoints, values).map(Self).map_err(py_err)
    }

    #[staticmethod]
    #[pyo3(signature = (capacity, slope, points = 2))]
    fn linear(capacity: f64, slope: f64, points: usize) -> PyResult<Self> {
        ValueFunction::linear(capacity, slope, points).map(Self).map_err(py_err)
    }

    fn value_at(&self, soc: f64) -> f64 {
        self.0.value_at(soc)
    }

    /// Left slope at `soc`; the first slope at zero.
    fn marginal_value(&self, soc: f64) -> PyResult<f64> {
        self.0.marginal_value(soc).map_err(py_err)
    }

    #[getter]
    fn breakpoints(&self) -> Vec<f64> {
        self.0.breakpoints().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    #[getter]
    fn slopes(&self) -> Vec<f64> {
        self.0.slopes().to_vec()
    }

    fn is_concave(&self, tol: f64) -> bool {
        self.0.is_concave(tol)
    }
}

/// Value functions for periods `0..=T` from backward induction.
#[pyclass(name = "ValueSeries", frozen)]
struct PyValueSeries(ValueSeries);

#[pymethods]
impl PyValueSeries {
    #[getter]
    fn horizon(&self) -> usize {
        self.0.horizon()
    }

    /// Value function at the start of period `t + 1`.
    fn at(&self, t: usize) -> PyResult<PyValueFunction> {
        self.0.at(t).cloned().map(PyValueFunction).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.functions().len()
    }
}

/// Value functions for the forecasts, ending at `end_value`.
#[pyfunction]
#[pyo3(signature = (end_value, forecasts, spec, soc_points = 1001, quadrature_nodes = None))]
fn value_functions(
    py: Python<'_>,
    end_value: &PyValueFunction,
    forecasts: Vec<PyDistribution>,
    spec: &PyStorageSpec,
    soc_points: usize,
    quadrature_nodes: Option<usize>,
) -> PyResult<PyValueSeries> {
    let dists: Vec<PriceDistribution> = forecasts.into_iter().map(|d| d.0).collect();
    let cfg = engine(soc_points, quadrature_nodes);
    py.detach(|| backward_induction(&end_value.0, &dists, &spec.0, &cfg))
        .map(PyValueSeries)
        .map_err(py_err)
}

fn curve_pairs(c: &BidCurve) -> Vec<(f64, f64)> {
    c.segments().iter().map(|s| (s.quantity_mw, s.price)).collect()
}

/// Per-period curves as dicts with `(quantity_mw, price)` segment lists.
#[pyfunction]
#[pyo3(signature = (series, soc, spec, segments = 10))]
fn bid_curves<'py>(
    py: Python<'py>,
    series: &PyValueSeries,
    soc: f64,
    spec: &PyStorageSpec,
    segments: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let bids = bids_from_series(&series.0, soc, &spec.0, segments).map_err(py_err)?;
    bids.iter()
        .map(|pb| {
            let d = PyDict::new(py);
            d.set_item("period", pb.period)?;
            d.set_item("discharge", curve_pairs(&pb.discharge))?;
            d.set_item("charge", curve_pairs(&pb.charge))?;
            Ok(d)
        })
        .collect()
}

/// Price-cap withholding bound for period `t` given the mean price path.
#[pyfunction]
fn withholding_bound<'py>(
    py: Python<'py>,
    t: usize,
    means: Vec<f64>,
    floor: f64,
    cap: f64,
    spec: &PyStorageSpec,
    end_marginal: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let b = PriceBounds::new(floor, cap).map_err(py_err)?;
    let r = bound_at(t, &means, b, &spec.0, end_marginal).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("period", r.period)?;
    d.set_item("horizon", r.horizon)?;
    d.set_item("bound", r.bound)?;
    d.set_item("end_term", r.end_term)?;
    Ok(d)
}

/// Zero-SoC discharge bid against forecast deviation; `(sigma, bid)` pairs.
#[pyfunction]
#[pyo3(signature = (mu, sigmas, spec, horizon = 23))]
fn sigma_sweep(py: Python<'_>, mu: f64, sigmas: Vec<f64>, spec: &PyStorageSpec, horizon: usize) -> PyResult<Vec<(f64, f64)>> {
    let rows = py
        .detach(|| sweep_sigmas(mu, &sigmas, &spec.0, horizon, &EngineConfig::default()))
        .map_err(py_err)?;
    Ok(rows.into_iter().map(|r| (r.sigma, r.bid)).collect())
}

/// Simulates one day of a preset scenario (`ideal`, `desk`) with Gaussian
/// storage forecasts of deviation `forecast_sigma` around day-ahead prices.
#[pyfunction]
#[pyo3(signature = (scenario, spec, seed = 0, forecast_sigma = 10.0))]
fn simulate<'py>(
    py: Python<'py>,
    scenario: &str,
    spec: &PyStorageSpec,
    seed: u64,
    forecast_sigma: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let sc = match scenario {
        "ideal" => Scenario::ideal(),
        "desk" => Scenario::desk_profile(),
        other => return Err(PyValueError::new_err(format!("unknown scenario '{other}'"))),
    };
    let spec = spec.0;
    let day = py
        .detach(|| {
            let da = storage_bidding::market::DayAhead::new(&sc, &spec)?;
            let forecasts = da.price_forecasts(forecast_sigma)?;
            simulate_day(&sc, &forecasts, &spec, seed)
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("prices", day.prices())?;
    d.set_item("soc_mwh", day.periods.iter().map(|p| p.soc_mwh).collect::<Vec<_>>())?;
    d.set_item("system_cost", day.system_cost)?;
    d.set_item("storage_profit", day.storage_profit)?;
    d.set_item("unserved_mwh", day.unserved_mwh)?;
    Ok(d)
}

#[pymodule]
fn storage_bidding_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStorageSpec>()?;
    m.add_class::<PyDistribution>()?;
    m.add_class::<PyValueFunction>()?;
    m.add_class::<PyValueSeries>()?;
    m.add_function(wrap_pyfunction!(value_functions, m)?)?;
    m.add_function(wrap_pyfunction!(bid_curves, m)?)?;
    m.add_function(wrap_pyfunction!(withholding_bound, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
