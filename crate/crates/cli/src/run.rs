//! Experiment orchestration: training loops, paired trained-vs-random
//! evaluation, subsampling-factor sweeps, and episode rendering.
//!
//! Every random quantity is derived from the run seed, so identical
//! configurations produce byte-identical logs. The learned agent and the
//! random baseline are always evaluated on identical episode seeds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use ivus_core::agent::{ActionMode, Agent, Transition};
use ivus_core::beamform::scan_convert;
use ivus_core::env::Environment;
use ivus_core::gumbel::anneal_sigma;
use ivus_core::mask::{action_strip, random_mask};
use ivus_core::quality::{mae, mse, psnr, ssim};
use ivus_core::rng::Rng;

use crate::config::RunConfig;
use crate::pgm;

/// Mean final-frame metrics and return over the evaluation episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub mean_return: f64,
    pub mse: f64,
    pub mae: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub enum Policy<'a> {
    Trained(&'a Agent),
    Random,
}

fn core_err(e: ivus_core::Error) -> anyhow::Error {
    anyhow!("{e}")
}

/// Runs `episodes` evaluation episodes with Gumbel noise disabled and
/// reports means. Episode scenes depend only on `(eval_seed, episode)`, so
/// two policies evaluated with the same seed see identical scenes.
pub fn evaluate(cfg: &RunConfig, policy: Policy<'_>, eval_seed: u64) -> Result<EvalMetrics> {
    let n = cfg.num_measurements();
    let k = cfg.mask_size();
    let mut env = Environment::new(cfg.env.clone(), &mut Rng::seed_from_pair(eval_seed, 0xD15C))
        .map_err(core_err)?;
    let mut total = EvalMetrics {
        mean_return: 0.0,
        mse: 0.0,
        mae: 0.0,
        psnr: 0.0,
        ssim: 0.0,
    };
    for ep in 0..cfg.eval_episodes {
        let mut reset_rng = Rng::seed_from_pair(eval_seed, ep as u64);
        let mut action_rng = Rng::seed_from_pair(eval_seed ^ 0x52414E44, ep as u64);
        let mut state = env.reset(&mut reset_rng).map_err(core_err)?;
        let mut ep_return = 0.0;
        for step in 0..cfg.env.episode_len {
            let mask = match &policy {
                Policy::Trained(agent) => {
                    let enc = env.encode(&state);
                    agent
                        .select_action(&enc, 0.0, &mut action_rng, ActionMode::Eval)
                        .map_err(core_err)?
                }
                Policy::Random => random_mask(k, n, &mut action_rng).map_err(core_err)?,
            };
            let res = env.step(&mask).map_err(core_err)?;
            ep_return += res.reward;
            if step + 1 == cfg.env.episode_len {
                total.mse += mse(&res.next_state, &res.ground_truth).map_err(core_err)?;
                total.mae += mae(&res.next_state, &res.ground_truth).map_err(core_err)?;
                total.psnr += psnr(&res.next_state, &res.ground_truth).map_err(core_err)?;
                total.ssim += ssim(&res.next_state, &res.ground_truth).map_err(core_err)?;
            }
            state = res.next_state;
        }
        total.mean_return += ep_return;
    }
    let inv = 1.0 / cfg.eval_episodes as f64;
    Ok(EvalMetrics {
        mean_return: total.mean_return * inv,
        mse: total.mse * inv,
        mae: total.mae * inv,
        psnr: total.psnr * inv,
        ssim: total.ssim * inv,
    })
}

/// Artifacts and headline numbers of one training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint_path: PathBuf,
    pub train_log_path: PathBuf,
    pub eval_log_path: PathBuf,
    pub summary_path: PathBuf,
    /// Mean eval return of the initial policy, before any updates.
    pub first_eval_return: Option<f64>,
    /// Mean eval return of the shipped (best) checkpoint.
    pub best_eval_return: Option<f64>,
    /// Metrics of the shipped checkpoint at its evaluation point.
    pub shipped_eval: Option<EvalMetrics>,
}

/// Warmup with random masks, then one critic and one actor update per
/// environment step, periodic noise-free evaluation, and a final checkpoint.
pub fn run_train(cfg: &RunConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;

    let n = cfg.num_measurements();
    let k = cfg.mask_size();
    let mut gumbel = cfg.agent.gumbel.clone();
    gumbel.anneal_steps = cfg.resolved_anneal_steps();
    let agent_cfg = ivus_core::agent::AgentConfig {
        gumbel,
        ..cfg.agent.clone()
    };

    let mut master = Rng::seed_from_u64(cfg.seed);
    let mut env_rng = master.fork();
    let mut agent_rng = master.fork();
    let eval_seed = master.next_u64();

    let mut env = Environment::new(cfg.env.clone(), &mut env_rng).map_err(core_err)?;
    let mut agent = Agent::new(agent_cfg, env.state_dim(), n, k, &mut agent_rng)
        .map_err(core_err)?;

    let mut train_log = String::from("step,reward,critic_loss,actor_value,sigma\n");
    let mut eval_log = String::from("step,return,mse,mae,psnr,ssim\n");
    let mut first_eval_return = None;
    // The shipped checkpoint is the best seen at the periodic evaluations;
    // its episodes derive from the run seed only.
    let mut best: Option<(EvalMetrics, Vec<u8>)> = None;

    let record_eval = |agent: &Agent,
                       step: usize,
                       eval_log: &mut String,
                       first: &mut Option<f64>,
                       best: &mut Option<(EvalMetrics, Vec<u8>)>|
     -> Result<()> {
        let m = evaluate(cfg, Policy::Trained(agent), eval_seed)?;
        writeln!(
            eval_log,
            "{},{},{},{},{},{}",
            step, m.mean_return, m.mse, m.mae, m.psnr, m.ssim
        )?;
        if first.is_none() {
            *first = Some(m.mean_return);
        }
        if best.as_ref().is_none_or(|(b, _)| m.mean_return > b.mean_return) {
            *best = Some((m, agent.checkpoint_bytes()));
        }
        Ok(())
    };

    if cfg.train_steps > 0 {
        record_eval(&agent, 0, &mut eval_log, &mut first_eval_return, &mut best)?;
    }

    let first_frame = env.reset(&mut env_rng).map_err(core_err)?;
    let mut encoded = env.encode(&first_frame);
    for step in 0..cfg.train_steps {
        let sigma = anneal_sigma(step, &agent.cfg.gumbel);
        let mask = if step < agent.cfg.warmup_steps {
            random_mask(k, n, &mut agent_rng).map_err(core_err)?
        } else {
            agent
                .select_action(&encoded, sigma, &mut agent_rng, ActionMode::Train)
                .map_err(core_err)?
        };
        let res = env.step(&mask).map_err(core_err)?;
        let next_encoded = env.encode(&res.next_state);
        agent.replay.push(Transition {
            state: std::mem::take(&mut encoded),
            action: mask,
            reward: res.reward,
            next_state: next_encoded.clone(),
            truncated: res.truncated,
        });
        let stats = if step >= agent.cfg.warmup_steps {
            agent.update(sigma, &mut agent_rng).map_err(core_err)?
        } else {
            None
        };
        match stats {
            Some(s) => writeln!(
                train_log,
                "{},{},{},{},{}",
                step, res.reward, s.critic_loss, s.actor_value, sigma
            )?,
            None => writeln!(train_log, "{},{},,,{}", step, res.reward, sigma)?,
        }
        if res.truncated {
            let frame = env.reset(&mut env_rng).map_err(core_err)?;
            encoded = env.encode(&frame);
        } else {
            encoded = next_encoded;
        }
        if (step + 1) % cfg.eval_interval == 0 || step + 1 == cfg.train_steps {
            record_eval(&agent, step + 1, &mut eval_log, &mut first_eval_return, &mut best)?;
        }
    }

    let checkpoint_path = cfg.out_dir.join("checkpoint.bin");
    let (shipped_eval, checkpoint_bytes) = match best {
        Some((m, bytes)) => (Some(m), bytes),
        None => (None, agent.checkpoint_bytes()),
    };
    std::fs::write(&checkpoint_path, checkpoint_bytes)
        .with_context(|| format!("writing {}", checkpoint_path.display()))?;
    let train_log_path = cfg.out_dir.join("train_log.csv");
    std::fs::write(&train_log_path, train_log)?;
    let eval_log_path = cfg.out_dir.join("eval_log.csv");
    std::fs::write(&eval_log_path, eval_log)?;

    let summary_path = cfg.out_dir.join("summary.csv");
    let mut summary = String::from("train_steps,return,mse,mae,psnr,ssim\n");
    match &shipped_eval {
        Some(m) => writeln!(
            summary,
            "{},{},{},{},{},{}",
            cfg.train_steps, m.mean_return, m.mse, m.mae, m.psnr, m.ssim
        )?,
        None => writeln!(summary, "{},,,,,", cfg.train_steps)?,
    }
    std::fs::write(&summary_path, summary)?;

    Ok(TrainOutput {
        checkpoint_path,
        train_log_path,
        eval_log_path,
        summary_path,
        first_eval_return,
        best_eval_return: shipped_eval.as_ref().map(|m| m.mean_return),
        shipped_eval,
    })
}

pub fn load_agent(cfg: &RunConfig, checkpoint: &Path) -> Result<Agent> {
    let bytes = std::fs::read(checkpoint)
        .with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
    let mut gumbel = cfg.agent.gumbel.clone();
    gumbel.anneal_steps = cfg.resolved_anneal_steps();
    let agent_cfg = ivus_core::agent::AgentConfig {
        gumbel,
        ..cfg.agent.clone()
    };
    Agent::from_checkpoint_bytes(&bytes, agent_cfg).map_err(core_err)
}

/// Paired evaluation table of a trained checkpoint against the random
/// baseline on identical episode seeds.
#[derive(Debug, Clone)]
pub struct EvalTable {
    pub trained: EvalMetrics,
    pub random: EvalMetrics,
}

impl EvalTable {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:>14} {:>14}", "metric", "random", "trained");
        let rows = [
            ("MSE", self.random.mse, self.trained.mse),
            ("MAE", self.random.mae, self.trained.mae),
            ("PSNR", self.random.psnr, self.trained.psnr),
            ("SSIM", self.random.ssim, self.trained.ssim),
            ("return", self.random.mean_return, self.trained.mean_return),
        ];
        for (name, rand, trained) in rows {
            let _ = writeln!(out, "{name:<8} {rand:>14.6} {trained:>14.6}");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,mse,mae,psnr,ssim,return\n");
        for (name, m) in [("random", &self.random), ("trained", &self.trained)] {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                name, m.mse, m.mae, m.psnr, m.ssim, m.mean_return
            );
        }
        out
    }
}

pub fn run_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<EvalTable> {
    cfg.validate()?;
    let agent = load_agent(cfg, checkpoint)?;
    anyhow::ensure!(
        agent.num_measurements() == cfg.num_measurements()
            && agent.num_selected() == cfg.mask_size(),
        "checkpoint was trained for N={}, K={}, config asks N={}, K={}",
        agent.num_measurements(),
        agent.num_selected(),
        cfg.num_measurements(),
        cfg.mask_size()
    );
    let eval_seed = cfg.seed;
    let trained = evaluate(cfg, Policy::Trained(&agent), eval_seed)?;
    let random = evaluate(cfg, Policy::Random, eval_seed)?;
    Ok(EvalTable { trained, random })
}

/// One (factor, seed) cell of a sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub factor: usize,
    pub seed: u64,
    pub trained: EvalMetrics,
    pub random: EvalMetrics,
    pub first_eval_return: f64,
    pub best_eval_return: f64,
    pub train_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub cells: Vec<SweepCell>,
    pub seeds_per_factor: usize,
}

/// Trains and evaluates the learned strategy against the paired random
/// baseline for every (factor, seed) cell: `seeds_per_factor` seeds starting
/// at the config seed. Cells run in parallel worker threads; results are
/// aggregated in a fixed order.
pub fn run_sweep(cfg: &RunConfig, factors: &[usize], seeds_per_factor: usize) -> Result<SweepOutput> {
    let n = cfg.num_measurements();
    for &f in factors {
        anyhow::ensure!(f >= 1 && n % f == 0, "factor {f} does not divide N = {n}");
    }
    let mut jobs = Vec::new();
    for &factor in factors {
        for s in 0..seeds_per_factor {
            jobs.push((factor, cfg.seed + s as u64));
        }
    }
    let results: Vec<Mutex<Option<Result<SweepCell>>>> =
        (0..jobs.len()).map(|_| Mutex::new(None)).collect();
    let next_job = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism()
        .map(|p| p.get())
        .unwrap_or(1)
        .min(jobs.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next_job.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let (factor, seed) = jobs[i];
                let cell = run_sweep_cell(cfg, factor, seed);
                *results[i].lock().unwrap() = Some(cell);
            });
        }
    });

    let mut cells = Vec::with_capacity(jobs.len());
    for slot in results {
        cells.push(slot.into_inner().unwrap().expect("worker filled every slot")?);
    }
    Ok(SweepOutput {
        cells,
        seeds_per_factor,
    })
}

fn run_sweep_cell(base: &RunConfig, factor: usize, seed: u64) -> Result<SweepCell> {
    let mut cfg = base.clone();
    cfg.subsampling_factor = factor;
    cfg.seed = seed;
    cfg.out_dir = base.out_dir.join(format!("sweep/factor{factor}_seed{seed}"));
    let started = Instant::now();
    let train = run_train(&cfg)?;
    let train_seconds = started.elapsed().as_secs_f64();
    let agent = load_agent(&cfg, &train.checkpoint_path)?;
    let eval_seed = cfg.seed ^ 0xE7A1;
    let trained = evaluate(&cfg, Policy::Trained(&agent), eval_seed)?;
    let random = evaluate(&cfg, Policy::Random, eval_seed)?;
    Ok(SweepCell {
        factor,
        seed,
        trained,
        random,
        first_eval_return: train.first_eval_return.unwrap_or(f64::NAN),
        best_eval_return: train.best_eval_return.unwrap_or(f64::NAN),
        train_seconds,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl SweepOutput {
    pub fn factors(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.cells.iter().map(|c| c.factor).collect();
        f.dedup();
        f
    }

    pub fn ssim_mean_std(&self, factor: usize, trained: bool) -> (f64, f64) {
        let vals: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.factor == factor)
            .map(|c| if trained { c.trained.ssim } else { c.random.ssim })
            .collect();
        mean_std(&vals)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>22} {:>22}",
            "factor", "random SSIM", "learned SSIM"
        );
        for factor in self.factors() {
            let (rm, rs) = self.ssim_mean_std(factor, false);
            let (tm, ts) = self.ssim_mean_std(factor, true);
            let _ = writeln!(
                out,
                "{factor:<8} {:>14.4} ± {rs:<6.4} {:>14.4} ± {ts:<6.4}",
                rm, tm
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "factor,seed,strategy,mse,mae,psnr,ssim,return,first_eval_return,best_eval_return,train_seconds\n",
        );
        for c in &self.cells {
            for (name, m) in [("random", &c.random), ("trained", &c.trained)] {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    c.factor,
                    c.seed,
                    name,
                    m.mse,
                    m.mae,
                    m.psnr,
                    m.ssim,
                    m.mean_return,
                    c.first_eval_return,
                    c.best_eval_return,
                    c.train_seconds
                );
            }
        }
        out
    }
}

/// Renders one evaluation episode from a checkpoint: a scan-converted
/// reconstruction raster and an action strip per frame, plus a per-step
/// trace of mask indices, reward, and metrics.
pub fn run_render(cfg: &RunConfig, checkpoint: &Path, raster_size: usize) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let agent = load_agent(cfg, checkpoint)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut env = Environment::new(cfg.env.clone(), &mut Rng::seed_from_pair(cfg.seed, 0xD15C))
        .map_err(core_err)?;
    let mut reset_rng = Rng::seed_from_pair(cfg.seed, 0);
    let mut action_rng = Rng::seed_from_pair(cfg.seed, 1);
    let mut state = env.reset(&mut reset_rng).map_err(core_err)?;
    let mut paths = Vec::new();
    let mut trace = String::from("step,reward,mse,mae,psnr,ssim,mask\n");
    let strip_scale = 8;
    for step in 0..cfg.env.episode_len {
        let enc = env.encode(&state);
        let mask = agent
            .select_action(&enc, 0.0, &mut action_rng, ActionMode::Eval)
            .map_err(core_err)?;
        let res = env.step(&mask).map_err(core_err)?;

        let frame_path = cfg.out_dir.join(format!("frame_{step:02}.pgm"));
        let raster = scan_convert(&res.next_state, raster_size);
        pgm::write_pgm(&frame_path, raster_size, raster_size, &raster)?;
        paths.push(frame_path);

        let strip_path = cfg.out_dir.join(format!("strip_{step:02}.pgm"));
        let strip = action_strip(&mask, &cfg.env.geometry);
        let mut upscaled =
            Vec::with_capacity(strip.len() * strip_scale * strip_scale);
        for _ in 0..strip_scale {
            for &g in &strip {
                upscaled.extend(std::iter::repeat_n(g, strip_scale));
            }
        }
        pgm::write_pgm_bytes(
            &strip_path,
            strip.len() * strip_scale,
            strip_scale,
            &upscaled,
        )?;
        paths.push(strip_path);

        writeln!(
            trace,
            "{},{},{},{},{},{},{}",
            step,
            res.reward,
            mse(&res.next_state, &res.ground_truth).map_err(core_err)?,
            mae(&res.next_state, &res.ground_truth).map_err(core_err)?,
            psnr(&res.next_state, &res.ground_truth).map_err(core_err)?,
            ssim(&res.next_state, &res.ground_truth).map_err(core_err)?,
            mask.indices()
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(";")
        )?;
        state = res.next_state;
    }
    let trace_path = cfg.out_dir.join("trace.csv");
    std::fs::write(&trace_path, trace)?;
    paths.push(trace_path);
    Ok(paths)
}
