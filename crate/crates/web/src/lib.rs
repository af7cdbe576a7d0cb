//! WebAssembly bindings for the browser demo in `www/`.

pub mod demo;

use metaiot::discernibility::ErrorMode;
use wasm_bindgen::prelude::*;

fn js_err(e: metaiot::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn mode(ml: bool) -> ErrorMode {
    if ml {
        ErrorMode::Ml
    } else {
        ErrorMode::Paper
    }
}

#[wasm_bindgen]
pub struct Demo {
    inner: demo::Model,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Demo, JsError> {
        Ok(Demo {
            inner: demo::Model::new().map_err(js_err)?,
        })
    }

    /// `[f_GHz..., gamma..., P_dBm...]`, each block one entry per probe frequency.
    pub fn spectrum(&self, d1: f64, d2: f64, temperature: f64, humidity: f64) -> Result<Vec<f64>, JsError> {
        let s = self
            .inner
            .spectrum(&[d1, d2], &[temperature, humidity])
            .map_err(js_err)?;
        Ok([s.freq_ghz, s.gamma, s.power_dbm].concat())
    }

    /// Row-major `n x n` objective values over the design box; NaN marks
    /// infeasible structures.
    pub fn landscape(&self, n: usize, ml: bool) -> Result<Vec<f64>, JsError> {
        Ok(self.inner.landscape(n, mode(ml)).map_err(js_err)?.values)
    }

    /// Error probability between two conditions one grid step apart in
    /// temperature, across `values` of power (W) or distance (m).
    #[allow(clippy::too_many_arguments)]
    pub fn error_curve(
        &self,
        d1: f64,
        d2: f64,
        temperature: f64,
        humidity: f64,
        step: f64,
        distance: bool,
        values: Vec<f64>,
        ml: bool,
    ) -> Result<Vec<f64>, JsError> {
        self.inner
            .error_curve(
                &[d1, d2],
                &[temperature, humidity],
                &[temperature + step, humidity],
                distance,
                &values,
                mode(ml),
            )
            .map_err(js_err)
    }
}
