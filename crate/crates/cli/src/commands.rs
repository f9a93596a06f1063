use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use num_bigint::BigUint;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use rllfbc::capacity::{capacity_alt_form, feedback_capacity, noncausal_chain, ErasureProb};
use rllfbc::coding::{min_lambda, transmit_message, Transcript};
use rllfbc::dp::{simulate_dp, value_iteration};
use rllfbc::Error;

use crate::{resolve_seed, CapacityArgs, CliError, DpSimArgs, TransmitArgs, ValueIterArgs};

const SCHEMA_VERSION: u32 = 1;

fn writer(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn parse_eps(value: f64) -> Result<ErasureProb, CliError> {
    ErasureProb::new(value)
        .map_err(|_| CliError::Usage(format!("epsilon must lie in [0, 1], got {value}")))
}

/// `start:end:step`, endpoints inclusive within half a step.
fn parse_sweep(raw: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = raw.split(':').collect();
    let usage = || CliError::Usage(format!("sweep must be start:end:step, got {raw}"));
    if parts.len() != 3 {
        return Err(usage());
    }
    let start: f64 = parts[0].parse().map_err(|_| usage())?;
    let end: f64 = parts[1].parse().map_err(|_| usage())?;
    let step: f64 = parts[2].parse().map_err(|_| usage())?;
    // NaN in any slot fails this check too
    let well_formed = step > 0.0 && end >= start;
    if !well_formed {
        return Err(CliError::Usage(format!(
            "sweep needs step > 0 and end ≥ start, got {raw}"
        )));
    }
    if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&end) {
        return Err(CliError::Usage(format!("sweep range must stay in [0, 1], got {raw}")));
    }
    let mut values = Vec::new();
    let mut i = 0u64;
    loop {
        let v = start + i as f64 * step;
        if v > end + step / 2.0 {
            break;
        }
        values.push(v.clamp(0.0, 1.0));
        i += 1;
    }
    Ok(values)
}

pub fn capacity(args: CapacityArgs) -> Result<(), CliError> {
    let eps_values = match (args.eps, &args.sweep) {
        (Some(e), None) => vec![e],
        (None, Some(raw)) => parse_sweep(raw)?,
        _ => {
            return Err(CliError::Usage(
                "exactly one of --eps or --sweep is required".into(),
            ))
        }
    };
    let mut out = writer(args.out.as_deref())?;
    writeln!(out, "epsilon,p_star,capacity,capacity_alt,noncausal_max")?;
    for e in eps_values {
        let ep = parse_eps(e)?;
        let cap = feedback_capacity(ep);
        // at ε = 1 both alternative routes hit the same 0 limit
        let alt = if ep.value() < 1.0 {
            capacity_alt_form(ep).expect("epsilon below 1")
        } else {
            0.0
        };
        let noncausal = noncausal_chain(ep, cap.p_star)
            .expect("p_star is a probability")
            .entropy_rate_bound;
        writeln!(
            out,
            "{},{},{},{},{}",
            cap.epsilon, cap.p_star, cap.capacity_bits, alt, noncausal
        )?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ValueIterSummary {
    schema_version: u32,
    epsilon: f64,
    grid_size: usize,
    iterations: usize,
    rho_estimate: f64,
    capacity: f64,
    p_star: f64,
}

pub fn value_iter(args: ValueIterArgs) -> Result<(), CliError> {
    let ep = parse_eps(args.eps)?;
    let (vf, rho) = value_iteration(ep, args.grid, args.iters).map_err(|e| match e {
        Error::GridTooSmall { grid_size } => {
            CliError::Usage(format!("grid must be at least 2, got {grid_size}"))
        }
        Error::NoIterations => CliError::Usage("iters must be at least 1".into()),
        other => CliError::Usage(other.to_string()),
    })?;

    let mut out = writer(args.out.as_deref())?;
    writeln!(out, "z,h,delta_star")?;
    for i in 0..vf.grid_size() {
        writeln!(out, "{},{},{}", vf.z_at(i), vf.values()[i], vf.policy()[i])?;
    }
    out.flush()?;

    let cap = feedback_capacity(ep);
    let summary = ValueIterSummary {
        schema_version: SCHEMA_VERSION,
        epsilon: ep.value(),
        grid_size: args.grid,
        iterations: args.iters,
        rho_estimate: rho,
        capacity: cap.capacity_bits,
        p_star: cap.p_star,
    };
    let mut sum_out = writer(args.summary.as_deref())?;
    writeln!(sum_out, "{}", serde_json::to_string(&summary).expect("serializable"))?;
    sum_out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DpSimSummaryJson {
    schema_version: u32,
    epsilon: f64,
    steps: u64,
    seed: u64,
    average_reward: f64,
    capacity: f64,
    histogram_support: Vec<f64>,
}

pub fn dp_sim(args: DpSimArgs) -> Result<(), CliError> {
    let ep = parse_eps(args.eps)?;
    if args.steps == 0 {
        return Err(CliError::Usage("steps must be at least 1".into()));
    }
    let seed = resolve_seed(args.seed)?;
    let sim = simulate_dp(ep, args.steps, seed);

    let mut out = writer(args.hist_out.as_deref())?;
    writeln!(out, "state,count")?;
    for &(state, count) in &sim.histogram {
        writeln!(out, "{state},{count}")?;
    }
    out.flush()?;

    let summary = DpSimSummaryJson {
        schema_version: SCHEMA_VERSION,
        epsilon: ep.value(),
        steps: args.steps,
        seed,
        average_reward: sim.average_reward,
        capacity: feedback_capacity(ep).capacity_bits,
        histogram_support: sim.histogram.iter().map(|&(s, _)| s).collect(),
    };
    let mut sum_out = writer(args.summary.as_deref())?;
    writeln!(sum_out, "{}", serde_json::to_string(&summary).expect("serializable"))?;
    sum_out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrialLine {
    schema_version: u32,
    trial: u64,
    epsilon: f64,
    #[serde(rename = "nR")]
    n_r: u64,
    lambda: u32,
    channel_uses: u64,
    rate: f64,
    capacity: f64,
    ratio: f64,
    decoded_ok: bool,
}

#[derive(Serialize)]
struct AggregateLine {
    schema_version: u32,
    epsilon: f64,
    #[serde(rename = "nR")]
    n_r: u64,
    lambda: u32,
    trials: u64,
    channel_uses: u64,
    rate: f64,
    capacity: f64,
    ratio: f64,
    errors: u64,
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    t: u64,
    x: u8,
    y: char,
    theta: u8,
    phase: &'a str,
    set_size: String,
}

fn write_transcript(path: &Path, transcript: &Transcript) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    for step in transcript.steps() {
        let line = TranscriptLine {
            t: step.t,
            x: step.input as u8,
            y: step.output.as_char(),
            theta: step.erased as u8,
            phase: step.kind.as_str(),
            set_size: step.set_size.to_string(),
        };
        writeln!(out, "{}", serde_json::to_string(&line).expect("serializable"))?;
    }
    out.flush()?;
    Ok(())
}

fn random_message(rng: &mut ChaCha8Rng, bits: u64) -> BigUint {
    let bytes = bits.div_ceil(8);
    let mut buf = vec![0u8; bytes as usize];
    rng.fill_bytes(&mut buf);
    let spare = (bytes * 8 - bits) as u32;
    if spare > 0 {
        let last = buf.last_mut().expect("at least one byte");
        *last &= 0xff >> spare;
    }
    BigUint::from_bytes_le(&buf)
}

pub fn transmit(args: TransmitArgs) -> Result<(), CliError> {
    let ep = parse_eps(args.eps)?;
    if args.msg_bits == 0 {
        return Err(CliError::Usage("msg-bits must be at least 1".into()));
    }
    if args.trials == 0 {
        return Err(CliError::Usage("trials must be at least 1".into()));
    }
    let minimum = min_lambda(ep).map_err(|e| CliError::Usage(e.to_string()))?;
    if args.lambda < minimum {
        return Err(CliError::Usage(format!(
            "lambda = {} is below the floor for this epsilon; need at least {minimum}",
            args.lambda
        )));
    }
    let seed = resolve_seed(args.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = BigUint::from(1u32) << args.msg_bits;
    let capacity = feedback_capacity(ep).capacity_bits;

    let mut out = writer(args.out.as_deref())?;
    let mut total_uses = 0u64;
    let mut errors = 0u64;
    for trial in 0..args.trials {
        let message = random_message(&mut rng, args.msg_bits);
        let session_seed: u64 = rng.gen();
        let outcome = transmit_message(ep, &message, &total, args.lambda, session_seed)
            .map_err(|e| match e {
                Error::MaxUsesExhausted { max_uses } => CliError::Exhausted(format!(
                    "trial {trial} exhausted its budget of {max_uses} channel uses"
                )),
                other => CliError::Usage(other.to_string()),
            })?;
        let uses = outcome.transcript.channel_uses;
        total_uses += uses;
        let decoded_ok = outcome.decoded == message;
        if !decoded_ok {
            errors += 1;
        }
        let rate = args.msg_bits as f64 / uses as f64;
        let line = TrialLine {
            schema_version: SCHEMA_VERSION,
            trial,
            epsilon: ep.value(),
            n_r: args.msg_bits,
            lambda: args.lambda,
            channel_uses: uses,
            rate,
            capacity,
            ratio: rate / capacity,
            decoded_ok,
        };
        writeln!(out, "{}", serde_json::to_string(&line).expect("serializable"))?;
        if trial == 0 {
            if let Some(path) = &args.transcript {
                write_transcript(path, &outcome.transcript)?;
            }
        }
    }
    let rate = (args.trials * args.msg_bits) as f64 / total_uses as f64;
    let aggregate = AggregateLine {
        schema_version: SCHEMA_VERSION,
        epsilon: ep.value(),
        n_r: args.msg_bits,
        lambda: args.lambda,
        trials: args.trials,
        channel_uses: total_uses,
        rate,
        capacity,
        ratio: rate / capacity,
        errors,
    };
    writeln!(out, "{}", serde_json::to_string(&aggregate).expect("serializable"))?;
    out.flush()?;
    Ok(())
}
