//! The encrypted layer circuits.
//!
//! Cost model per stage (f = filter/pool width, t = t1*t2 = item width):
//! convolution f plaintext multiplies and f-1 rotations; dense t plaintext
//! multiplies and t1+t2-2 rotations; pooling f-1 rotations and one
//! multiply. Duplication (`replicate`) is one rotation and one addition
//! and consumes no level. The full pipeline consumes exactly six levels.

use super::counter::OpCounter;
use super::operands::{
    ConvOperands, DenseOperands, FrozenOperands, PoolOperands, ReluOperands, StageIo, FROZEN_DEPTH,
};
use super::packing::PackingPlan;
use crate::ckks::eval::{scales_match, HoistedRotations};
use crate::ckks::{Ciphertext, GaloisKeySet, Plaintext, RelinKey};
use crate::ring::{Domain, RingElement};
use crate::{HeError, Result};

/// Evaluation key material a server needs: rotations plus relinearization.
pub struct EvalKeys {
    pub galois: GaloisKeySet,
    pub relin: RelinKey,
}

fn check_stage(ct: &Ciphertext, io: &StageIo, what: &str) -> Result<()> {
    if ct.level() != io.level {
        return Err(HeError::LevelMismatch(format!(
            "{what}: ciphertext at level {}, stage expects {}",
            ct.level(),
            io.level
        )));
    }
    if !scales_match(ct.scale_log2(), io.scale_log2) {
        return Err(HeError::ScaleMismatch(format!(
            "{what}: ciphertext scale 2^{}, stage expects 2^{}",
            ct.scale_log2(),
            io.scale_log2
        )));
    }
    Ok(())
}

fn rot(ct: &Ciphertext, step: i32, keys: &EvalKeys, counter: &OpCounter) -> Result<Ciphertext> {
    if step == 0 {
        return Ok(ct.clone());
    }
    counter.count_rotation(step);
    ct.rotate(step, &keys.galois)
}

/// Sum of ct_i * pt_i over a group of terms, accumulated lazily in u128
/// (valid while terms * q_max^2 stays under 2^128, which the 62-bit prime
/// cap guarantees for groups up to 64).
fn fused_plain_mac(terms: &[(&Ciphertext, &Plaintext)], counter: &OpCounter) -> Result<Ciphertext> {
    let (ct0, pt0) = terms[0];
    let params = ct0.params();
    let ring = params.ring();
    let n = ring.degree();
    let level = ct0.level();
    debug_assert!(terms.len() <= 64);

    let mut lazy: Vec<Vec<Vec<u128>>> = (0..ct0.size())
        .map(|_| (0..=level).map(|_| vec![0u128; n]).collect())
        .collect();
    for (idx, (ct, pt)) in terms.iter().enumerate() {
        counter.count_plain_mult();
        if idx > 0 {
            counter.count_addition();
            if ct.level() != level || ct.size() != ct0.size() {
                return Err(HeError::LevelMismatch("mixed levels in fused sum".into()));
            }
            if !scales_match(
                ct.scale_log2() + pt.scale_log2(),
                ct0.scale_log2() + pt0.scale_log2(),
            ) {
                return Err(HeError::ScaleMismatch("mixed scales in fused sum".into()));
            }
        }
        if pt.level() != level {
            return Err(HeError::LevelMismatch(
                "plaintext level in fused sum".into(),
            ));
        }
        let pel = pt.element().residues();
        for (part, acc_part) in lazy.iter_mut().enumerate() {
            let src = ct.parts()[part].residues();
            for (i, acc) in acc_part.iter_mut().enumerate() {
                let (s, p) = (&src[i], &pel[i]);
                for k in 0..n {
                    acc[k] += s[k] as u128 * p[k] as u128;
                }
            }
        }
    }

    let parts: Vec<RingElement> = lazy
        .into_iter()
        .map(|acc_part| {
            let rows: Vec<Vec<u64>> = acc_part
                .into_iter()
                .enumerate()
                .map(|(i, row)| {
                    let m = ring.prime(i).modulus;
                    row.into_iter().map(|x| m.reduce_u128(x)).collect()
                })
                .collect();
            RingElement::from_residues(ring, level, Domain::Evaluation, rows)
        })
        .collect();
    Ok(Ciphertext::new(
        params,
        parts,
        ct0.scale_log2() + pt0.scale_log2(),
    ))
}

fn rot_hoisted(
    ct: &Ciphertext,
    hoisted: &HoistedRotations,
    step: i32,
    keys: &EvalKeys,
    counter: &OpCounter,
) -> Result<Ciphertext> {
    if step == 0 {
        return Ok(ct.clone());
    }
    counter.count_rotation(step);
    ct.rotate_hoisted(hoisted, step, &keys.galois)
}

/// Zero-padded 'same' 1-D convolution over each packed item, output
/// masked to the item window. Consumes one level.
pub fn enc_conv1d(
    ct: &Ciphertext,
    ops: &ConvOperands,
    keys: &EvalKeys,
    counter: &OpCounter,
) -> Result<Ciphertext> {
    check_stage(ct, &ops.input, "conv1d")?;
    let hoisted = ct.hoist_rotations()?;
    let mut shifted = Vec::with_capacity(ops.taps.len());
    for (step, _) in &ops.taps {
        shifted.push(rot_hoisted(ct, &hoisted, *step, keys, counter)?);
    }
    let terms: Vec<(&Ciphertext, &Plaintext)> = shifted
        .iter()
        .zip(&ops.taps)
        .map(|(s, (_, tap))| (s, tap))
        .collect();
    let acc = fused_plain_mac(&terms, counter)?;
    counter.count_rescale();
    let out = acc.rescale()?;
    counter.count_addition();
    out.add_plain(&ops.bias)
}

/// Restore the duplicated layout: regions [y | 0] become [y | y | 0].
/// One rotation, one addition, no level consumed. Requires the upper
/// region half to be zero, which the pipeline's masking guarantees but
/// nothing can check homomorphically.
pub fn replicate(
    ct: &Ciphertext,
    plan: &PackingPlan,
    keys: &EvalKeys,
    counter: &OpCounter,
) -> Result<Ciphertext> {
    let shifted = rot(ct, -(plan.item_width as i32), keys, counter)?;
    counter.count_addition();
    ct.add(&shifted)
}

/// Dense layer via the baby-step/giant-step diagonal method on the
/// duplicated layout. Output valid in [0, rows) of each region, zeros
/// elsewhere; consumes one level.
pub fn enc_dense_bsgs(
    ct: &Ciphertext,
    ops: &DenseOperands,
    plan: &PackingPlan,
    keys: &EvalKeys,
    counter: &OpCounter,
) -> Result<Ciphertext> {
    check_stage(ct, &ops.input, "dense")?;
    let (t1, t2) = (plan.baby, plan.giant);
    // Baby-step rotations all act on the same input: hoist the digit
    // decomposition once.
    let hoisted = ct.hoist_rotations()?;
    let mut baby = Vec::with_capacity(t1);
    baby.push(ct.clone());
    for j in 1..t1 {
        baby.push(rot_hoisted(ct, &hoisted, j as i32, keys, counter)?);
    }
    let mut outer: Option<Ciphertext> = None;
    for k in 0..t2 {
        let terms: Vec<(&Ciphertext, &Plaintext)> = baby
            .iter()
            .enumerate()
            .map(|(j, b)| (b, &ops.diags[k * t1 + j]))
            .collect();
        let mut inner = fused_plain_mac(&terms, counter)?;
        if k > 0 {
            inner = rot(&inner, (k * t1) as i32, keys, counter)?;
        }
        match outer.as_mut() {
            None => outer = Some(inner),
            Some(a) => {
                counter.count_addition();
                a.add_assign_ct(&inner)?;
            }
        }
    }
    counter.count_rescale();
    let out = outer.expect("t2 >= 1").rescale()?;
    counter.count_addition();
    out.add_plain(&ops.bias)
}

/// Slot-wise cubic activation in multiplicative depth 2, evaluated as
/// z^2 * (c3*z + c2) + (c1*z + c0).
pub fn enc_relu_approx(
    ct: &Ciphertext,
    ops: &ReluOperands,
    keys: &EvalKeys,
    counter: &OpCounter,
) -> Result<Ciphertext> {
    check_stage(ct, &ops.input, "activation")?;
    counter.count_ct_mult();
    counter.count_relinearization();
    counter.count_rescale();
    let z2 = ct.mul(ct)?.relinearize(&keys.relin)?.rescale()?;

    counter.count_plain_mult();
    counter.count_addition();
    counter.count_rescale();
    let hi = ct.mul_plain(&ops.c3)?.add_plain(&ops.c2)?.rescale()?;

    counter.count_ct_mult();
    counter.count_relinearization();
    counter.count_rescale();
    let cubic = z2.mul(&hi)?.relinearize(&keys.relin)?.rescale()?;

    counter.count_plain_mult();
    counter.count_addition();
    counter.count_rescale();
    let lo = ct
        .mul_plain(&ops.c1)?
        .add_plain(&ops.c0)?
        .rescale()?
        .mod_switch_to(ops.output.level)?;

    counter.count_addition();
    cubic.add(&lo)
}

/// Stride-1 valid average pool of window f: f-1 rotations, one masked
/// multiply (the mask also zeroes the tail), one level.
pub fn enc_avgpool(
    ct: &Ciphertext,
    ops: &PoolOperands,
    keys: &EvalKeys,
    counter: &OpCounter,
) -> Result<Ciphertext> {
    check_stage(ct, &ops.input, "avgpool")?;
    let mut acc = ct.clone();
    for i in 1..ops.size {
        let shifted = rot(ct, i as i32, keys, counter)?;
        counter.count_addition();
        acc = acc.add(&shifted)?;
    }
    counter.count_plain_mult();
    counter.count_rescale();
    acc.mul_plain(&ops.mask)?.rescale()
}

/// The frozen pipeline: conv, duplicate, dense1, activation, pool,
/// duplicate, dense2. Consumes exactly six levels; the output holds
/// t - pool + 1 valid slots per region.
pub fn frozen_forward(
    ct: &Ciphertext,
    frozen: &FrozenOperands,
    keys: &EvalKeys,
    counter: &OpCounter,
) -> Result<Ciphertext> {
    if ct.level() < FROZEN_DEPTH {
        return Err(HeError::DepthExhausted(format!(
            "pipeline needs {FROZEN_DEPTH} levels, ciphertext has {}",
            ct.level()
        )));
    }
    check_stage(ct, &frozen.conv.input, "pipeline input")?;
    let plan = &frozen.plan;
    let x = enc_conv1d(ct, &frozen.conv, keys, counter)?;
    let x = replicate(&x, plan, keys, counter)?;
    let x = enc_dense_bsgs(&x, &frozen.dense1, plan, keys, counter)?;
    let x = enc_relu_approx(&x, &frozen.relu, keys, counter)?;
    let x = enc_avgpool(&x, &frozen.pool, keys, counter)?;
    let x = replicate(&x, plan, keys, counter)?;
    let out = enc_dense_bsgs(&x, &frozen.dense2, plan, keys, counter)?;
    debug_assert_eq!(out.level(), ct.level() - FROZEN_DEPTH);
    Ok(out)
}
