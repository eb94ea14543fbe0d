//! Flow evaluation: endpoint error, outlier rate and flow warp loss.
//!
//! FWL follows the usual definition from the event-flow literature: the
//! variance of the IWE warped by the flow at `t0`, divided by the variance of
//! the unwarped IWE. Values above 1 mean the flow sharpens the events.

use crate::error::{Error, Result};
use crate::events::EventSet;
use crate::flow::FlowField;
use crate::objectives::variance;
use crate::warp::{build_iwe, warp_events_dense, DenseVelocity, WarpedEvents};

/// Which pixels take part in an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Pixels with at least one event.
    #[default]
    Events,
    /// Every pixel where ground truth is valid.
    GtValid,
}

impl std::str::FromStr for MaskPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "events" | "event_presence" => Ok(Self::Events),
            "gt" | "gt_valid" => Ok(Self::GtValid),
            other => Err(Error::Validation(format!("unknown mask policy `{other}`"))),
        }
    }
}

/// Pixels where both flows are valid and the policy selects the pixel.
pub fn evaluation_mask(pred: &FlowField, gt: &FlowField, policy: MaskPolicy, events: Option<&EventSet>) -> Result<Vec<bool>> {
    if pred.size() != gt.size() {
        return Err(Error::Dimension("prediction and ground truth differ in size".into()));
    }
    let mut mask: Vec<bool> = pred.valid().iter().zip(gt.valid()).map(|(a, b)| *a && *b).collect();
    if policy == MaskPolicy::Events {
        let events = events.ok_or_else(|| Error::Validation("event-presence mask needs events".into()))?;
        if events.sensor_size() != pred.size() {
            return Err(Error::Dimension("events and flow differ in size".into()));
        }
        mask = restrict_to_events(&mask, events);
    }
    Ok(mask)
}

/// `mask ∧ (at least one event at the pixel)`.
pub fn restrict_to_events(mask: &[bool], events: &EventSet) -> Vec<bool> {
    let size = events.sensor_size();
    let mut hit = vec![false; size.pixel_count()];
    for e in events.events() {
        hit[size.index(e.x as u32, e.y as u32)] = true;
    }
    mask.iter().zip(hit).map(|(m, h)| *m && h).collect()
}

fn endpoint_errors<'a>(pred: &'a FlowField, gt: &'a FlowField, mask: &'a [bool]) -> Result<impl Iterator<Item = f64> + 'a> {
    if pred.size() != gt.size() || mask.len() != pred.size().pixel_count() {
        return Err(Error::Dimension("flow and mask sizes differ".into()));
    }
    if !mask.iter().any(|m| *m) {
        return Err(Error::EmptyMask);
    }
    Ok((0..mask.len()).filter(|&i| mask[i]).map(|i| {
        let du = pred.u()[i] as f64 - gt.u()[i] as f64;
        let dv = pred.v()[i] as f64 - gt.v()[i] as f64;
        du.hypot(dv)
    }))
}

/// Mean endpoint error over `mask`, pixels.
pub fn aee(pred: &FlowField, gt: &FlowField, mask: &[bool]) -> Result<f64> {
    let (sum, n) = endpoint_errors(pred, gt, mask)?.fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
    Ok(sum / n as f64)
}

/// Percentage of masked pixels whose endpoint error exceeds `n` pixels.
pub fn outlier_pct(pred: &FlowField, gt: &FlowField, mask: &[bool], n: f64) -> Result<f64> {
    let (out, total) = endpoint_errors(pred, gt, mask)?.fold((0usize, 0usize), |(o, t), e| (o + (e > n) as usize, t + 1));
    Ok(100.0 * out as f64 / total as f64)
}

/// Flow warp loss of a displacement field over `window`. Events are warped to
/// the middle of the window, so contracting and expanding scenes lose the same
/// amount of mass through the frame border.
pub fn fwl(events: &EventSet, flow: &FlowField, window: (f64, f64)) -> Result<f64> {
    if events.is_empty() {
        return Err(Error::EmptyEventSet);
    }
    let size = events.sensor_size();
    if flow.size() != size {
        return Err(Error::Dimension("flow and events differ in size".into()));
    }
    let span = window.1 - window.0;
    if !(span > 0.0) {
        return Err(Error::Validation("empty window".into()));
    }
    let vel = DenseVelocity {
        size,
        vel: flow
            .u()
            .iter()
            .zip(flow.v())
            .map(|(u, v)| [*u as f64 / span, *v as f64 / span])
            .collect(),
    };
    let identity = WarpedEvents {
        points: events.events().iter().map(|e| [e.x as f64, e.y as f64]).collect(),
        t_ref: window.0,
    };
    let base = variance(&build_iwe(&identity, size, 1.0)?);
    if !(base > 0.0) {
        return Err(Error::DegenerateContrast);
    }
    let warped = warp_events_dense(events, &vel, 0.5 * (window.0 + window.1));
    Ok(variance(&build_iwe(&warped, size, 1.0)?) / base)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EvalReport {
    pub aee: f64,
    pub outlier_pct: f64,
    /// Absent when no events were supplied.
    pub fwl: Option<f64>,
    pub n_valid: usize,
    pub outlier_threshold: f64,
    pub mask: MaskPolicy,
}

/// Full report; `events` drive both the event mask and FWL.
pub fn evaluate(
    pred: &FlowField,
    gt: &FlowField,
    events: Option<(&EventSet, (f64, f64))>,
    policy: MaskPolicy,
    n: f64,
) -> Result<EvalReport> {
    let mask = evaluation_mask(pred, gt, policy, events.map(|e| e.0))?;
    Ok(EvalReport {
        aee: aee(pred, gt, &mask)?,
        outlier_pct: outlier_pct(pred, gt, &mask, n)?,
        fwl: events.map(|(e, w)| fwl(e, pred, w)).transpose()?,
        n_valid: mask.iter().filter(|m| **m).count(),
        outlier_threshold: n,
        mask: policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{Event, SensorSize};

    fn field(size: SensorSize, f: impl Fn(u32, u32) -> (f64, f64)) -> FlowField {
        FlowField::from_fn(size, f)
    }

    #[test]
    fn aee_examples() {
        let s = SensorSize::new(6, 4);
        let gt = field(s, |x, y| (x as f64 * 0.5, -(y as f64)));
        let all = vec![true; s.pixel_count()];
        assert_eq!(aee(&gt, &gt, &all).unwrap(), 0.0);
        let off = field(s, |x, y| (x as f64 * 0.5 + 3.0, -(y as f64) + 4.0));
        assert!((aee(&off, &gt, &all).unwrap() - 5.0).abs() < 1e-6);
        assert!(matches!(aee(&gt, &gt, &vec![false; s.pixel_count()]), Err(Error::EmptyMask)));
    }

    #[test]
    fn outlier_examples() {
        let s = SensorSize::new(4, 4);
        let all = vec![true; 16];
        let gt = FlowField::zeros(s);
        assert_eq!(outlier_pct(&gt, &gt, &all, 3.0).unwrap(), 0.0);
        let three = field(s, |_, _| (3.0, 0.0));
        assert_eq!(outlier_pct(&three, &gt, &all, 3.0).unwrap(), 0.0);
        let half = field(s, |x, _| if x < 2 { (10.0, 0.0) } else { (0.0, 0.0) });
        assert_eq!(outlier_pct(&half, &gt, &all, 3.0).unwrap(), 50.0);
    }

    #[test]
    fn fwl_zero_flow_is_one() {
        let s = SensorSize::new(10, 10);
        let ev: Vec<Event> = (0..30).map(|k| Event::new(k as f64 * 0.01, (k % 7) as u16 + 1, (k % 5) as u16 + 2, 1)).collect();
        let ev = EventSet::with_window(ev, s, 0.0, 0.3).unwrap();
        assert_eq!(fwl(&ev, &FlowField::zeros(s), (0.0, 0.3)).unwrap(), 1.0);
    }

    #[test]
    fn mask_policies() {
        let s = SensorSize::new(3, 2);
        let ev = EventSet::new(vec![Event::new(0.0, 1, 1, 1)], s).unwrap();
        let mut gt = FlowField::zeros(s);
        gt.set_invalid(0, 0);
        let pred = FlowField::zeros(s);
        let m = evaluation_mask(&pred, &gt, MaskPolicy::GtValid, None).unwrap();
        assert_eq!(m.iter().filter(|v| **v).count(), 5);
        let m = evaluation_mask(&pred, &gt, MaskPolicy::Events, Some(&ev)).unwrap();
        assert_eq!(m, vec![false, false, false, false, true, false]);
    }
}
