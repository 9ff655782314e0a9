//! Precomputed plaintext operands for each pipeline stage.
//!
//! Every multiplicative stage encodes its constants at the level it runs
//! at and at a scale chosen so downstream additions meet exactly. All
//! operand vectors are zero outside their support window, which keeps
//! every value outside [0, t) of each region at zero throughout the
//! pipeline -- that is what makes global cyclic rotations safe across
//! region boundaries.

use std::sync::Arc;

use super::packing::PackingPlan;
use super::weights::FrozenWeights;
use crate::ckks::{encode, CkksParams, Plaintext};
use crate::{HeError, Result};

/// Level and log2 scale of a ciphertext entering or leaving a stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageIo {
    pub level: usize,
    pub scale_log2: f64,
}

/// Build a slot vector that repeats `values[k]` at offset `k` of every
/// region (zero elsewhere).
fn region_pattern(plan: &PackingPlan, width: usize, value: impl Fn(usize) -> f64) -> Vec<f64> {
    debug_assert!(width <= plan.region);
    let mut slots = vec![0.0f64; plan.slots];
    for r in 0..plan.p_impl {
        let base = r * plan.region;
        for k in 0..width {
            slots[base + k] = value(k);
        }
    }
    slots
}

/// Operands for the packed 1-D convolution.
pub struct ConvOperands {
    /// (rotation step, masked tap vector), one per filter tap.
    pub(crate) taps: Vec<(i32, Plaintext)>,
    pub(crate) bias: Plaintext,
    pub input: StageIo,
    pub output: StageIo,
}

impl ConvOperands {
    pub fn prepare(
        params: &Arc<CkksParams>,
        plan: &PackingPlan,
        filter: &[f64],
        bias: f64,
        input: StageIo,
    ) -> Result<Self> {
        if filter.is_empty() || filter.len() % 2 == 0 {
            return Err(HeError::Shape(
                "convolution filter length must be odd".into(),
            ));
        }
        if input.level < 1 {
            return Err(HeError::DepthExhausted(
                "convolution needs one level".into(),
            ));
        }
        let t = plan.item_width;
        let c = (filter.len() / 2) as i32;
        let delta = params.log2_scale() as f64;
        let mut taps = Vec::with_capacity(filter.len());
        for (j, &w) in filter.iter().enumerate() {
            let d = j as i32 - c;
            // Tap d contributes w * x[k+d] to output slot k whenever both
            // k and k+d fall inside the item.
            let vec = region_pattern(plan, t, |k| {
                let src = k as i32 + d;
                if src >= 0 && (src as usize) < t {
                    w
                } else {
                    0.0
                }
            });
            taps.push((d, encode(params, &vec, input.level, delta)?));
        }
        let output = StageIo {
            level: input.level - 1,
            scale_log2: input.scale_log2 + delta - params.log2_prime(input.level),
        };
        let bias_vec = region_pattern(plan, t, |_| bias);
        let bias = encode(params, &bias_vec, output.level, output.scale_log2)?;
        Ok(ConvOperands {
            taps,
            bias,
            input,
            output,
        })
    }

    pub fn filter_len(&self) -> usize {
        self.taps.len()
    }
}

/// Operands for one baby-step/giant-step dense layer.
pub struct DenseOperands {
    /// Masked generalized diagonals, indexed i = k*t1 + j.
    pub(crate) diags: Vec<Plaintext>,
    pub(crate) bias: Plaintext,
    pub input: StageIo,
    pub output: StageIo,
}

impl DenseOperands {
    /// `matrix` has up to t rows of width t; missing rows are zero-padded
    /// (the pooled dense layer is rectangular).
    pub fn prepare(
        params: &Arc<CkksParams>,
        plan: &PackingPlan,
        matrix: &[Vec<f64>],
        bias: &[f64],
        input: StageIo,
    ) -> Result<Self> {
        let t = plan.item_width;
        if matrix.len() > t || matrix.iter().any(|r| r.len() != t) {
            return Err(HeError::Shape(format!(
                "dense matrix must be <= {t} rows of width {t}"
            )));
        }
        if bias.len() != matrix.len() {
            return Err(HeError::Shape("dense bias width mismatch".into()));
        }
        if input.level < 1 {
            return Err(HeError::DepthExhausted(
                "dense layer needs one level".into(),
            ));
        }
        let rows = matrix.len();
        let (t1, t2) = (plan.baby, plan.giant);
        let delta = params.log2_scale() as f64;
        let at = |r: usize, c: usize| -> f64 {
            if r < rows {
                matrix[r][c]
            } else {
                0.0
            }
        };
        let mut diags = Vec::with_capacity(t);
        for k in 0..t2 {
            for j in 0..t1 {
                let i = k * t1 + j;
                // Diagonal i shifted right by k*t1: support [k*t1, k*t1+t)
                // inside each region, so the giant-step rotation by k*t1
                // brings the partial sum home while cross-region reads
                // stay on zeros.
                let offset = k * t1;
                let mut slots = vec![0.0f64; plan.slots];
                for reg in 0..plan.p_impl {
                    let base = reg * plan.region;
                    for r in 0..t {
                        slots[base + offset + r] = at(r, (r + i) % t);
                    }
                }
                diags.push(encode(params, &slots, input.level, delta)?);
            }
        }
        let output = StageIo {
            level: input.level - 1,
            scale_log2: input.scale_log2 + delta - params.log2_prime(input.level),
        };
        let bias_vec = region_pattern(plan, rows, |k| bias[k]);
        let bias = encode(params, &bias_vec, output.level, output.scale_log2)?;
        Ok(DenseOperands {
            diags,
            bias,
            input,
            output,
        })
    }
}

/// Operands for the depth-2 cubic activation, evaluated as
/// z^2 * (c3*z + c2) + (c1*z + c0) with the linear branch mod-switched to
/// meet the cubic branch.
pub struct ReluOperands {
    pub(crate) c3: Plaintext,
    pub(crate) c2: Plaintext,
    pub(crate) c1: Plaintext,
    pub(crate) c0: Plaintext,
    pub input: StageIo,
    pub output: StageIo,
}

impl ReluOperands {
    pub fn prepare(
        params: &Arc<CkksParams>,
        plan: &PackingPlan,
        coeffs: &[f64; 4],
        valid_width: usize,
        input: StageIo,
    ) -> Result<Self> {
        if input.level < 2 {
            return Err(HeError::DepthExhausted(
                "activation needs two levels".into(),
            ));
        }
        let delta = params.log2_scale() as f64;
        let s = input.scale_log2;
        let q_top = params.log2_prime(input.level);
        let q_next = params.log2_prime(input.level - 1);
        // Cubic branch: z2 at scale 2s - q_top, hi at s + u - q_top,
        // product rescaled by q_next. The linear branch must land on the
        // same scale, which pins its encode scale u_lo.
        let u = delta;
        let u_lo = 2.0 * s + u - q_top - q_next;
        let masked = |v: f64, scale: f64, level: usize| -> Result<Plaintext> {
            let vec = region_pattern(plan, valid_width, |_| v);
            encode(params, &vec, level, scale)
        };
        let c3 = masked(coeffs[0], u, input.level)?;
        let c2 = masked(coeffs[1], s + u, input.level)?;
        let c1 = masked(coeffs[2], u_lo, input.level)?;
        let c0 = masked(coeffs[3], s + u_lo, input.level)?;
        let z2_scale = (s + s) - q_top;
        let hi_scale = (s + u) - q_top;
        let output = StageIo {
            level: input.level - 2,
            scale_log2: (z2_scale + hi_scale) - q_next,
        };
        Ok(ReluOperands {
            c3,
            c2,
            c1,
            c0,
            input,
            output,
        })
    }
}

/// Operands for the stride-1 valid average pool: the 1/f multiplication
/// doubles as the validity mask.
pub struct PoolOperands {
    pub(crate) mask: Plaintext,
    pub(crate) size: usize,
    pub input: StageIo,
    pub output: StageIo,
}

impl PoolOperands {
    pub fn prepare(
        params: &Arc<CkksParams>,
        plan: &PackingPlan,
        size: usize,
        input: StageIo,
    ) -> Result<Self> {
        if size < 1 || size > plan.item_width {
            return Err(HeError::Shape(format!("pool size {size} out of range")));
        }
        if input.level < 1 {
            return Err(HeError::DepthExhausted("pooling needs one level".into()));
        }
        let delta = params.log2_scale() as f64;
        let valid = plan.item_width - size + 1;
        let vec = region_pattern(plan, valid, |_| 1.0 / size as f64);
        let mask = encode(params, &vec, input.level, delta)?;
        let output = StageIo {
            level: input.level - 1,
            scale_log2: input.scale_log2 + delta - params.log2_prime(input.level),
        };
        Ok(PoolOperands {
            mask,
            size,
            input,
            output,
        })
    }
}

/// All precomputed operands for the six-level frozen pipeline.
pub struct FrozenOperands {
    pub plan: PackingPlan,
    pub conv: ConvOperands,
    pub dense1: DenseOperands,
    pub relu: ReluOperands,
    pub pool: PoolOperands,
    pub dense2: DenseOperands,
}

/// Multiplicative depth of the frozen pipeline.
pub const FROZEN_DEPTH: usize = 6;

/// Chain the per-stage operand builders for a weight set, starting from a
/// fresh top-level ciphertext at the parameter scale.
pub fn prepare_frozen_operands(
    params: &Arc<CkksParams>,
    plan: &PackingPlan,
    weights: &FrozenWeights,
) -> Result<FrozenOperands> {
    weights.validate()?;
    if weights.item_width() != plan.item_width {
        return Err(HeError::Shape(format!(
            "weights expect width {}, plan packs {}",
            weights.item_width(),
            plan.item_width
        )));
    }
    if params.max_level() < FROZEN_DEPTH {
        return Err(HeError::DepthExhausted(format!(
            "chain supports depth {}, pipeline needs {FROZEN_DEPTH}",
            params.max_level()
        )));
    }
    let start = StageIo {
        level: params.max_level(),
        scale_log2: params.log2_scale() as f64,
    };
    let conv = ConvOperands::prepare(params, plan, &weights.conv_filter, weights.conv_bias, start)?;
    let dense1 = DenseOperands::prepare(
        params,
        plan,
        &weights.dense1,
        &weights.dense1_bias,
        conv.output,
    )?;
    let relu = ReluOperands::prepare(
        params,
        plan,
        &weights.relu_coeffs,
        plan.item_width,
        dense1.output,
    )?;
    let pool = PoolOperands::prepare(params, plan, weights.pool, relu.output)?;
    let dense2 = DenseOperands::prepare(
        params,
        plan,
        &weights.dense2,
        &weights.dense2_bias,
        pool.output,
    )?;
    debug_assert_eq!(dense2.output.level, start.level - FROZEN_DEPTH);
    Ok(FrozenOperands {
        plan: plan.clone(),
        conv,
        dense1,
        relu,
        pool,
        dense2,
    })
}
