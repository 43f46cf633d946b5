use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis, Zip};

use super::{CellType, ModelConfig, ModelState, Params};
use crate::curriculum::Batch;
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_finite(a: &Array2<f64>, layer: usize, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical {
            layer,
            context: format!("non-finite {what}"),
        })
    }
}

/// Per-step activations kept for the backward pass.
struct StepCache {
    h: Array2<f64>,
    z: Option<Array2<f64>>,
    r: Option<Array2<f64>>,
    cand: Option<Array2<f64>>,
}

/// One cell update given the precomputed input projection `xw = x·Wᵀ`.
fn cell_step(
    cell: CellType,
    u: &Array2<f64>,
    b: &Array2<f64>,
    xw: ArrayView2<f64>,
    h_prev: ArrayView2<f64>,
    keep: bool,
) -> StepCache {
    match cell {
        CellType::SimpleRnn => {
            let mut a = &xw + &h_prev.dot(&u.t()) + b;
            a.mapv_inplace(f64::tanh);
            StepCache {
                h: a,
                z: None,
                r: None,
                cand: None,
            }
        }
        CellType::Gru => {
            let hs = u.ncols();
            let uzr = u.slice(s![..2 * hs, ..]);
            let uh = u.slice(s![2 * hs.., ..]);
            let mut gates = &xw.slice(s![.., ..2 * hs]) + &h_prev.dot(&uzr.t()) + &b.slice(s![.., ..2 * hs]);
            gates.mapv_inplace(sigmoid);
            let z = gates.slice(s![.., ..hs]).to_owned();
            let r = gates.slice(s![.., hs..]).to_owned();
            let rh = &r * &h_prev;
            let mut cand = &xw.slice(s![.., 2 * hs..]) + &rh.dot(&uh.t()) + &b.slice(s![.., 2 * hs..]);
            cand.mapv_inplace(f64::tanh);
            let mut h = h_prev.to_owned();
            Zip::from(&mut h).and(&z).and(&cand).for_each(|h, &z, &c| *h = (1.0 - z) * *h + z * c);
            if keep {
                StepCache {
                    h,
                    z: Some(z),
                    r: Some(r),
                    cand: Some(cand),
                }
            } else {
                StepCache {
                    h,
                    z: None,
                    r: None,
                    cand: None,
                }
            }
        }
    }
}

/// Single cell update for layer `layer`: `x` is (batch, input), `h_prev` is
/// (batch, hidden).
pub fn cell_forward(params: &Params, cfg: &ModelConfig, layer: usize, x: ArrayView2<f64>, h_prev: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (w, u, b) = params.layer(layer);
    if x.ncols() != w.ncols() || h_prev.ncols() != cfg.hidden_size || x.nrows() != h_prev.nrows() {
        return Err(Error::arg("cell input shapes do not match the configuration"));
    }
    let xw = x.dot(&w.t());
    let h = cell_step(cfg.cell, u, b, xw.view(), h_prev, false).h;
    check_finite(&h, layer, "hidden state")?;
    Ok(h)
}

/// Forward values of one layer over the whole window.
struct LayerTrace {
    /// (time, batch, input)
    input: Array3<f64>,
    steps: Vec<StepCache>,
}

/// Forward values of the whole network.
struct Trace {
    layers: Vec<LayerTrace>,
    /// (time, batch, channels)
    predictions: Array3<f64>,
}

fn flatten(a: &Array3<f64>) -> ArrayView2<'_, f64> {
    let (t, b, c) = a.dim();
    a.view().into_shape_with_order((t * b, c)).expect("contiguous")
}

fn unflatten(a: Array2<f64>, dims: (usize, usize, usize)) -> Array3<f64> {
    let a = if a.is_standard_layout() { a } else { a.as_standard_layout().into_owned() };
    a.into_shape_with_order(dims).expect("shape")
}

fn time_major(a: &Array3<f64>) -> Array3<f64> {
    a.view().permuted_axes([1, 0, 2]).as_standard_layout().into_owned()
}

fn run(params: &Params, cfg: &ModelConfig, inputs: &Array3<f64>, keep: bool) -> Result<Trace> {
    let (batch, window, channels) = inputs.dim();
    if channels != cfg.input_channels {
        return Err(Error::arg(format!(
            "batch has {channels} channels, model expects {}",
            cfg.input_channels
        )));
    }
    let hs = cfg.hidden_size;
    let mut x = time_major(inputs);
    let mut layers = Vec::with_capacity(cfg.num_layers);
    for l in 0..cfg.num_layers {
        let (w, u, b) = params.layer(l);
        let xw = flatten(&x).dot(&w.t());
        let xw = unflatten(xw, (window, batch, w.nrows()));
        let mut out = Array3::zeros((window, batch, hs));
        let mut steps = Vec::with_capacity(window);
        let zero = Array2::zeros((batch, hs));
        for t in 0..window {
            let prev = if t == 0 { zero.view() } else { steps.last().map(|c: &StepCache| c.h.view()).unwrap() };
            let c = cell_step(cfg.cell, u, b, xw.index_axis(Axis(0), t), prev, keep);
            check_finite(&c.h, l, "hidden state")?;
            out.index_axis_mut(Axis(0), t).assign(&c.h);
            steps.push(c);
        }
        layers.push(LayerTrace { input: x, steps });
        x = out;
    }
    let (vw, vb) = params.head();
    let y = flatten(&x).dot(&vw.t()) + vb;
    check_finite(&y, cfg.num_layers, "prediction")?;
    let predictions = unflatten(y, (window, batch, channels));
    layers.push(LayerTrace { input: x, steps: Vec::new() });
    Ok(Trace { layers, predictions })
}

/// Teacher-forced predictions, (batch, window, channels); `out[b, t]`
/// estimates `inputs[b, t + 1]`. Hidden states start at zero.
pub fn forward_teacher_forced(state: &ModelState, inputs: &Array3<f64>) -> Result<Array3<f64>> {
    let trace = run(&state.params, &state.config, inputs, false)?;
    Ok(time_major(&trace.predictions))
}

/// Mean squared error over every element.
pub fn mse_loss(predictions: &Array3<f64>, targets: &Array3<f64>) -> f64 {
    assert_eq!(predictions.dim(), targets.dim(), "shape mismatch");
    let n = predictions.len().max(1) as f64;
    Zip::from(predictions)
        .and(targets)
        .fold(0.0, |acc, &p, &t| acc + (p - t) * (p - t))
        / n
}

/// Loss and exact gradients of [`mse_loss`] by backpropagation through the
/// full unrolled window.
pub fn loss_and_gradients(state: &ModelState, batch: &Batch) -> Result<(f64, Params)> {
    let cfg = &state.config;
    let params = &state.params;
    let trace = run(params, cfg, &batch.inputs, true)?;
    let targets = time_major(&batch.targets);
    let (window, bsz, channels) = targets.dim();
    let n = (window * bsz * channels) as f64;
    let loss = mse_loss(&trace.predictions, &targets);

    let mut grads = Params::zeros(cfg);
    let nt = grads.tensors.len();

    // head
    let dy = (&trace.predictions - &targets) * (2.0 / n);
    let dy2 = flatten(&dy);
    let top = &trace.layers[cfg.num_layers].input;
    let (vw, _) = params.head();
    grads.tensors[nt - 2] = dy2.t().dot(&flatten(top));
    grads.tensors[nt - 1] = dy2.sum_axis(Axis(0)).insert_axis(Axis(0));
    let mut d_out = unflatten(dy2.dot(vw), (window, bsz, cfg.hidden_size));

    let hs = cfg.hidden_size;
    for l in (0..cfg.num_layers).rev() {
        let (w, u, _) = params.layer(l);
        let lt = &trace.layers[l];
        let g = w.nrows();
        let mut da = Array3::<f64>::zeros((window, bsz, g));
        let mut du = Array2::<f64>::zeros(u.dim());
        let mut dh_next = Array2::<f64>::zeros((bsz, hs));
        let zero = Array2::<f64>::zeros((bsz, hs));
        for t in (0..window).rev() {
            let step = &lt.steps[t];
            let hp = if t == 0 { zero.view() } else { lt.steps[t - 1].h.view() };
            let dh = &d_out.index_axis(Axis(0), t) + &dh_next;
            match cfg.cell {
                CellType::SimpleRnn => {
                    let mut a = dh;
                    Zip::from(&mut a).and(&step.h).for_each(|d, &h| *d *= 1.0 - h * h);
                    du += &a.t().dot(&hp);
                    dh_next = a.dot(u);
                    da.index_axis_mut(Axis(0), t).assign(&a);
                }
                CellType::Gru => {
                    let z = step.z.as_ref().unwrap();
                    let r = step.r.as_ref().unwrap();
                    let cand = step.cand.as_ref().unwrap();
                    let mut dah = &dh * z;
                    Zip::from(&mut dah).and(cand).for_each(|d, &c| *d *= 1.0 - c * c);
                    let mut dz = Array2::zeros((bsz, hs));
                    Zip::from(&mut dz)
                        .and(&dh)
                        .and(cand)
                        .and(hp)
                        .and(z)
                        .for_each(|o, &d, &c, &p, &z| *o = d * (c - p) * z * (1.0 - z));
                    let mut dhp = &dh * &z.mapv(|z| 1.0 - z);

                    let uh = u.slice(s![2 * hs.., ..]);
                    let rh = r * &hp;
                    du.slice_mut(s![2 * hs.., ..]).scaled_add(1.0, &dah.t().dot(&rh));
                    let drh = dah.dot(&uh);
                    let mut dr = Array2::zeros((bsz, hs));
                    Zip::from(&mut dr)
                        .and(&drh)
                        .and(hp)
                        .and(r)
                        .for_each(|o, &d, &p, &r| *o = d * p * r * (1.0 - r));
                    dhp += &(&drh * r);

                    let mut dzr = Array2::zeros((bsz, 2 * hs));
                    dzr.slice_mut(s![.., ..hs]).assign(&dz);
                    dzr.slice_mut(s![.., hs..]).assign(&dr);
                    let uzr = u.slice(s![..2 * hs, ..]);
                    du.slice_mut(s![..2 * hs, ..]).scaled_add(1.0, &dzr.t().dot(&hp));
                    dhp += &dzr.dot(&uzr);
                    dh_next = dhp;

                    let mut slot = da.index_axis_mut(Axis(0), t);
                    slot.slice_mut(s![.., ..2 * hs]).assign(&dzr);
                    slot.slice_mut(s![.., 2 * hs..]).assign(&dah);
                }
            }
        }
        let da2 = flatten(&da);
        grads.tensors[3 * l] = da2.t().dot(&flatten(&lt.input));
        grads.tensors[3 * l + 1] = du;
        grads.tensors[3 * l + 2] = da2.sum_axis(Axis(0)).insert_axis(Axis(0));
        if l > 0 {
            d_out = unflatten(da2.dot(w), (window, bsz, w.ncols()));
        }
    }
    for (i, gt) in grads.tensors.iter().enumerate() {
        if !gt.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical {
                layer: (i / 3).min(cfg.num_layers),
                context: "non-finite gradient".into(),
            });
        }
    }
    Ok((loss, grads))
}

pub fn bptt_gradients(state: &ModelState, batch: &Batch) -> Result<Params> {
    loss_and_gradients(state, batch).map(|(_, g)| g)
}

/// Per-layer hidden state of a single running sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Hidden(pub Vec<Array1<f64>>);

impl ModelState {
    pub fn initial_hidden(&self) -> Hidden {
        Hidden(vec![Array1::zeros(self.config.hidden_size); self.config.num_layers])
    }

    /// Feeds one observation, updating `hidden`, and returns the prediction
    /// of the next observation.
    pub fn step(&self, hidden: &mut Hidden, x: &[f64]) -> Result<Vec<f64>> {
        let cfg = &self.config;
        if x.len() != cfg.input_channels {
            return Err(Error::arg("observation length does not match input_channels"));
        }
        let mut input = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row");
        for l in 0..cfg.num_layers {
            let (w, u, b) = self.params.layer(l);
            let xw = input.dot(&w.t());
            let hp = hidden.0[l].view().insert_axis(Axis(0));
            let h = cell_step(cfg.cell, u, b, xw.view(), hp, false).h;
            check_finite(&h, l, "hidden state")?;
            hidden.0[l] = h.row(0).to_owned();
            input = h;
        }
        let (vw, vb) = self.params.head();
        let y = input.dot(&vw.t()) + vb;
        check_finite(&y, cfg.num_layers, "prediction")?;
        Ok(y.row(0).to_vec())
    }
}
