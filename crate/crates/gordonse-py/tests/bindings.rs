use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyDict>)>(f: F) {
    Python::initialize();
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(gordonse_py::gordonse_module)(py);
        let globals = PyDict::new(py);
        globals.set_item("g", m).unwrap();
        f(py, &globals);
    });
}

fn run(py: Python<'_>, globals: &Bound<'_, PyDict>, code: &str) -> PyResult<()> {
    let code = std::ffi::CString::new(code).unwrap();
    py.run(&code, Some(globals), None)
}

#[test]
fn operators_and_states_round_trip() {
    with_module(|py, g| {
        run(
            py,
            g,
            "s = g.StatePoint(1.0, 0.0)\n\
             n = g.SeOperator('am_mlr', 0.0).apply(s)\n\
             assert n == g.StatePoint(1.0, 0.0), n\n\
             assert len(g.SeOperator('gd_pr', 0.1, kappa=20.0).iterate(s, 5)) == 6\n\
             assert g.fit_rate([2.0 ** -(2 ** k) for k in range(6)], 'raw')['label'] == 'superlinear'\n",
        )
        .unwrap();
    });
}

#[test]
fn errors_surface_as_value_error() {
    with_module(|py, g| {
        let err = run(py, g, "g.StatePoint(0.5, -1.0)").unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
        let err = run(py, g, "g.SeOperator('newton', 0.0)").unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
        let err = run(py, g, "g.simulate('model.bogus=1')").unwrap_err();
        assert!(err.to_string().contains("unknown key"));
    });
}
