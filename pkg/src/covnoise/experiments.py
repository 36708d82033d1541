"""Experiment suites behind the CLI.

Each suite is split into ``tasks(cfg)`` (picklable work items, one per
regime/seed), ``run(task)`` (pure; safe in a worker process) and
``assemble(cfg, results)`` which turns the ordered results into file contents
and summary lines. Nothing here writes to disk, so output bytes depend only on
the config and never on how tasks were scheduled.
"""

from dataclasses import dataclass, field

import numpy as np

from .covariance import (
    BatchScale,
    DiagonalSqrt,
    Explicit,
    Isotropic,
    TraceIsotropic,
    Zero,
    matrix_sqrt,
)
from .diagnostics import avg_gradient_variance, frobenius_pair, max_hessian_eigenvalue
from .errors import NonFiniteLoss
from .harness.data import gen_blobs, gen_toy_2d, load_idx
from .harness.io import Table, csv_text
from .harness.svg import render_svg
from .network import flatten, init_mlp, loss_and_grad_fn, per_example_gradients
from .optimizer import (
    NoiseRegime,
    RunConfig,
    iterations_to_epsilon,
    run_mlp,
    run_quadratic_batch,
)
from .quadratic import Constant, TheoremDecay, make_quadratic, random_spd, theorem_bound
from .rng import Rng
from .stability import OuSystem, ou_covariance, ou_mean, riccati_residual, scaled_hellinger


@dataclass
class Outcome:
    files: dict = field(default_factory=dict)  # relative path -> text
    lines: list = field(default_factory=list)
    failures: list = field(default_factory=list)


def _fmt_k(k):
    return "NA" if k is None else str(k)


# --- quadratic


def build_problem(p):
    m = p["matrix"]
    if isinstance(m, dict):
        r = m["random"]
        return make_quadratic(random_spd(r["dim"], Rng(r["seed"]), r["cond"]))
    return make_quadratic(np.array(m, dtype=np.float64))


def noise_spec(name, problem, scale):
    A = problem.A
    d = problem.dim
    if name == "zero" or scale == 0:
        return Zero(d)
    if name == "full":
        return Explicit(scale * problem.sqrt())
    if name == "diag":
        return DiagonalSqrt(scale * scale * np.diag(A).copy())
    if name == "trace":
        return TraceIsotropic(scale * scale * float(np.trace(A)), d)
    return Isotropic(scale, d)


def build_schedule(p, problem):
    s = p["schedule"]
    if s["type"] == "decay":
        return TheoremDecay.for_problem(problem, s["alpha0"])
    return Constant(s["alpha"])


class QuadraticSuite:
    @staticmethod
    def tasks(cfg):
        return [("quadratic", cfg.params, noise, seed) for noise in cfg.params["noises"] for seed in cfg.seed_list]

    @staticmethod
    def run(task):
        _, p, noise, seed = task
        problem = build_problem(p)
        spec = noise_spec(noise, problem, p["noise_scale"])
        rc = RunConfig(p["steps"], build_schedule(p, problem), seed=seed, log_every=p["log_every"])
        theta0 = None if p["theta0"] is None else np.array(p["theta0"])
        (log,) = run_quadratic_batch(problem, spec, rc, [seed], theta0=theta0)
        return log

    @staticmethod
    def assemble(cfg, results):
        p = cfg.params
        problem = build_problem(p)
        schedule = build_schedule(p, problem)
        theta0 = np.ones(problem.dim) if p["theta0"] is None else np.array(p["theta0"])
        out = Outcome()
        tasks = QuadraticSuite.tasks(cfg)
        by_noise = {}
        iter_rows = []
        for (_, _, noise, seed), log in zip(tasks, results):
            out.files[f"quadratic/{noise}/seed_{seed}.csv"] = csv_text(log)
            hits = [iterations_to_epsilon(log, e) for e in p["epsilons"]]
            iter_rows += [(noise, seed, e, k) for e, k in zip(p["epsilons"], hits)]
            by_noise.setdefault(noise, []).append(log)
            eps_txt = " ".join(f"eps={e:g}:k={_fmt_k(k)}" for e, k in zip(p["epsilons"], hits))
            status = f"diverged_at={log.diverged_at}" if log.diverged_at is not None else f"final_loss={log.loss[-1]:.6g}"
            out.lines.append(f"quadratic noise={noise} seed={seed} {status} {eps_txt}")
            if log.diverged_at is not None:
                out.failures.append(f"noise={noise} seed={seed} diverged at step {log.diverged_at}")
        out.files["quadratic/iterations.csv"] = csv_text(Table(("noise", "seed", "epsilon", "iterations"), iter_rows))

        rows, curves = [], []
        decaying = isinstance(schedule, TheoremDecay)
        for noise, logs in by_noise.items():
            ok_logs = [lg for lg in logs if lg.diverged_at is None]
            if not ok_logs:
                continue
            steps = ok_logs[0].step
            L = np.array([lg.loss for lg in ok_logs])
            mean = L.mean(axis=0)
            se = L.std(axis=0, ddof=1) / np.sqrt(len(ok_logs)) if len(ok_logs) > 1 else np.zeros_like(mean)
            spec = noise_spec(noise, problem, p["noise_scale"])
            C = spec.matrix()
            all_ok = True
            for i, k in enumerate(steps):
                if decaying:
                    b = theorem_bound(problem, C, theta0, schedule.gamma, int(k))
                    within = bool(mean[i] <= b + 3.0 * se[i])
                    all_ok &= within
                else:
                    b, within = None, None
                rows.append((noise, int(k), mean[i], se[i], b, within))
            curves.append((f"{noise} mean loss", list(zip(steps[1:], mean[1:]))))
            if decaying:
                bk = [theorem_bound(problem, C, theta0, schedule.gamma, int(k)) for k in steps[1:]]
                curves.append((f"{noise} bound", list(zip(steps[1:], bk))))
            med = []
            for e in p["epsilons"]:
                ks = [iterations_to_epsilon(lg, e) for lg in logs]
                ks = [np.inf if k is None else k for k in ks]
                m = float(np.median(ks))
                med.append(f"eps={e:g}:median_k={'NA' if not np.isfinite(m) else f'{m:g}'}")
            bound_txt = f" bound_ok={all_ok}" if decaying else ""
            out.lines.append(f"quadratic noise={noise} seeds={len(logs)} " + " ".join(med) + bound_txt)
        out.files["quadratic/summary.csv"] = csv_text(
            Table(("noise", "step", "mean_loss", "stderr", "bound", "within_bound"), rows)
        )
        if curves:
            out.files["quadratic/bound_check.svg"] = render_svg(
                curves, "line", log_y=True, title="seed-mean loss vs bound", xlabel="step", ylabel="log10 loss"
            )
        return out


# --- toy2d


class Toy2dSuite:
    @staticmethod
    def _setup(p):
        data, problem = gen_toy_2d(p["n"], p["noise_sd"], p["data_seed"], tuple(p["w_true"]))
        return data, problem, np.asarray(data.params["theta_star"])

    @staticmethod
    def tasks(cfg):
        return [("toy2d", cfg.params, noise, seed) for seed in cfg.seed_list for noise in cfg.params["noises"]]

    @staticmethod
    def run(task):
        _, p, noise, seed = task
        _, problem, star = Toy2dSuite._setup(p)
        spec = noise_spec(noise, problem, p["noise_scale"])
        rc = RunConfig(p["steps"], Constant(p["alpha"]), seed=seed, log_every=p["log_every"], record_params=True)
        (log,) = run_quadratic_batch(problem, spec, rc, [seed], theta0=np.array(p["theta0"]) - star)
        log.params = log.params + star
        return log

    @staticmethod
    def assemble(cfg, results):
        p = cfg.params
        _, problem, star = Toy2dSuite._setup(p)
        out = Outcome()
        per_seed = {}
        for (_, _, noise, seed), log in zip(Toy2dSuite.tasks(cfg), results):
            out.files[f"toy2d/{noise}/seed_{seed}.csv"] = csv_text(log)
            path_rows = [(int(k), float(a), float(b)) for k, (a, b) in zip(log.step, log.params)]
            out.files[f"toy2d/{noise}/seed_{seed}_path.csv"] = csv_text(Table(("step", "theta1", "theta2"), path_rows))
            per_seed.setdefault(seed, []).append((noise, log))
            if log.diverged_at is not None:
                out.failures.append(f"noise={noise} seed={seed} diverged at step {log.diverged_at}")
                out.lines.append(f"toy2d noise={noise} seed={seed} diverged_at={log.diverged_at}")
            else:
                end = log.params[-1]
                out.lines.append(
                    f"toy2d noise={noise} seed={seed} excess_loss={log.loss[-1]:.6g} "
                    f"theta=({end[0]:.4f},{end[1]:.4f}) theta_star=({star[0]:.4f},{star[1]:.4f})"
                )
        for seed, runs in per_seed.items():
            series = [(noise, [tuple(x) for x in log.params if np.all(np.isfinite(x))]) for noise, log in runs]
            series.append(("minimum", [tuple(star)]))
            out.files[f"toy2d/trajectories_seed_{seed}.svg"] = render_svg(
                series, "trajectory2d", problem=problem, center=star, title=f"parameter paths, seed {seed}",
                xlabel="slope", ylabel="intercept",
            )
        return out


# --- train / diagnose shared setup


def load_data(spec):
    if spec["source"] == "blobs":
        return gen_blobs(spec["n"], spec["in_dim"], spec["classes"], spec["spread"], spec["seed"])
    return load_idx(spec["images"], spec["labels"], spec["limit"])


def build_network(p, data):
    classes = int(data.targets.max()) + 1
    if p["data"]["source"] == "blobs":
        classes = p["data"]["classes"]
    sizes = [data.inputs.shape[1], *p["hidden"], classes]
    return init_mlp(sizes, Rng(p["init_seed"]), p["activation"], p["init_scale"])


def make_regime(kind, p, n, termination_fraction=1.0):
    if kind == "none":
        return NoiseRegime("none")
    m_large = n if p["m_large"] is None else p["m_large"]
    return NoiseRegime(kind, scale=BatchScale(m_large, p["m_small"]), termination_fraction=termination_fraction)


def steps_to_threshold(log, threshold):
    if threshold is None:
        return None
    return iterations_to_epsilon(log, threshold)


class TrainSuite:
    @staticmethod
    def tasks(cfg):
        return [("train", cfg.params, regime, seed) for regime in cfg.params["regimes"] for seed in cfg.seed_list]

    @staticmethod
    def run(task):
        _, p, regime_kind, seed = task
        data = load_data(p["data"])
        mlp0 = build_network(p, data)
        regime = make_regime(regime_kind, p, len(data), p["termination_fraction"])
        rc = RunConfig(p["steps"], Constant(p["alpha"]), seed=seed, log_every=p["log_every"])
        try:
            log = run_mlp(mlp0, data.batch, regime, rc, large_batch=p["large_batch"])
        except NonFiniteLoss as e:
            log = e.log
        log.meta.pop("final_params", None)
        return log

    @staticmethod
    def assemble(cfg, results):
        p = cfg.params
        out = Outcome()
        rows, curves = [], {}
        first = cfg.seed_list[0]
        for (_, _, regime, seed), log in zip(TrainSuite.tasks(cfg), results):
            out.files[f"train/{regime}/seed_{seed}.csv"] = csv_text(log)
            k = steps_to_threshold(log, p["loss_threshold"])
            rows.append((regime, seed, float(log.loss[-1]), k, log.diverged_at))
            if seed == first:
                curves[regime] = list(zip(log.step, log.loss))
            if log.diverged_at is not None:
                out.failures.append(f"regime={regime} seed={seed} diverged at step {log.diverged_at}")
            thr = f" steps_to_{p['loss_threshold']:g}={_fmt_k(k)}" if p["loss_threshold"] is not None else ""
            out.lines.append(f"train regime={regime} seed={seed} final_loss={log.loss[-1]:.6g}{thr}")
        out.files["train/summary.csv"] = csv_text(
            Table(("regime", "seed", "final_loss", "steps_to_threshold", "diverged_at"), rows)
        )
        out.files["train/loss.svg"] = render_svg(
            list(curves.items()), "line", log_y=True, title=f"training loss, seed {first}",
            xlabel="step", ylabel="log10 loss",
        )
        return out


# --- diagnose

VARIANCE_SERIES = ("small_batch", "large_batch", "large_batch+fisher_full", "large_batch+fisher_diag")


def train_with_checkpoints(mlp, data, alpha, steps, every):
    """Noise-free full-batch GD; (step, full norm, diag norm) at every checkpoint."""
    theta = flatten(mlp)
    checkpoints = []
    for k in range(steps + 1):
        grads = per_example_gradients(mlp, data)
        if k % every == 0 or k == steps:
            full, diag = frobenius_pair(grads)
            checkpoints.append((k, full, diag))
        if k == steps:
            break
        theta = theta - alpha * grads.mean()
        mlp = mlp.with_params(theta)
    return mlp, checkpoints


class DiagnoseSuite:
    @staticmethod
    def _trained(p):
        data = load_data(p["data"])
        mlp0 = build_network(p, data)
        mlp, checkpoints = train_with_checkpoints(mlp0, data.batch, p["alpha"], p["train_steps"], p["checkpoint_every"])
        return data.batch, mlp, checkpoints

    @staticmethod
    def tasks(cfg):
        return [("diagnose", cfg.params, seed) for seed in cfg.seed_list]

    @staticmethod
    def run(task):
        _, p, seed = task
        batch, mlp, _ = DiagnoseSuite._trained(p)
        n = len(batch)
        m_large = n if p["m_large"] is None else p["m_large"]
        setups = (
            (p["m_small"], make_regime("none", p, n)),
            (m_large, make_regime("none", p, n)),
            (m_large, make_regime("fisher_full", p, n)),
            (m_large, make_regime("fisher_diag", p, n)),
        )
        reports = []
        for i, (bs, regime) in enumerate(setups):
            # disjoint counter ranges of one seed's stream
            rng = Rng(seed, counter=i << 40)
            reports.append(avg_gradient_variance(mlp, batch, bs, regime, p["draws"], rng))
        fn = loss_and_grad_fn(mlp, batch)
        eig = max_hessian_eigenvalue(fn, flatten(mlp), p["max_iters"], p["tol"], Rng(seed))
        return reports, eig

    @staticmethod
    def assemble(cfg, results):
        _, _, checkpoints = DiagnoseSuite._trained(cfg.params)
        out = Outcome()
        frob_rows = [(k, f, d, d / f if f > 0 else None) for k, f, d in checkpoints]
        out.files["diagnose/frobenius.csv"] = csv_text(Table(("step", "full_norm", "diag_norm", "ratio"), frob_rows))
        out.files["diagnose/frobenius.svg"] = render_svg(
            [("full Fisher", [(k, f) for k, f, _ in checkpoints]), ("diagonal Fisher", [(k, d) for k, _, d in checkpoints])],
            "line", log_y=True, title="Frobenius norms", xlabel="step", ylabel="log10 norm",
        )
        eig_rows = []
        for seed, (reports, eig) in zip(cfg.seed_list, results):
            vrows = []
            for name, rep in zip(VARIANCE_SERIES, reports):
                vrows += [(name, layer, v, rep.meta["batch_size"], rep.meta["draws"]) for layer, v in rep.layers]
            out.files[f"diagnose/variance_seed_{seed}.csv"] = csv_text(
                Table(("series", "layer", "variance", "batch_size", "draws"), vrows)
            )
            eig_rows.append((seed, eig.lambda_max, eig.iterations, eig.residual, eig.converged))
            means = " ".join(f"{name}={np.mean(rep.variances):.4g}" for name, rep in zip(VARIANCE_SERIES, reports))
            out.lines.append(
                f"diagnose seed={seed} lambda_max={eig.lambda_max:.6g} converged={eig.converged} variance {means}"
            )
        out.files["diagnose/eigen.csv"] = csv_text(
            Table(("seed", "lambda_max", "iterations", "residual", "converged"), eig_rows)
        )
        ratios = [d / f for _, f, d in checkpoints if f > 0]
        out.lines.append(f"diagnose frobenius checkpoints={len(checkpoints)} max_diag_over_full={max(ratios):.4g}")
        return out


# --- stability


def build_system(s):
    A = np.array(s["A"], dtype=np.float64)
    C = s["C"]
    if C == "sqrtA":
        C = matrix_sqrt(A)
    elif C == "identity":
        C = np.eye(A.shape[0])
    elif C == "sqrt_diag":
        C = np.diag(np.sqrt(np.diag(A)))
    return OuSystem(A, np.array(C, dtype=np.float64), s["alpha"], s["theta0"])


class StabilitySuite:
    @staticmethod
    def tasks(cfg):
        return [("stability", cfg.params)]

    @staticmethod
    def run(task):
        _, p = task
        s1, s2 = (build_system(s) for s in p["systems"])
        rows = []
        for t in p["times"]:
            gap = float(np.linalg.norm(ou_mean(s1, t) - ou_mean(s2, t)))
            for lam in p["lambdas"]:
                rows.append((t, lam, scaled_hellinger(s1, s2, lam, t), gap))
        ric = []
        for i, s in enumerate((s1, s2)):
            for t in p["times"]:
                ric.append((i, t, riccati_residual(s, t, p["riccati_dt"]), float(np.trace(ou_covariance(s, t)))))
        return rows, ric

    @staticmethod
    def assemble(cfg, results):
        (rows, ric), = results
        out = Outcome()
        out.files["stability/hellinger.csv"] = csv_text(Table(("t", "lambda", "hellinger_sq", "mean_gap"), rows))
        out.files["stability/riccati.csv"] = csv_text(Table(("system", "t", "residual", "trace_cov"), ric))
        series = {}
        for t, lam, h, _ in rows:
            series.setdefault(f"t={t:g}", []).append((float(np.log10(lam)), h))
        out.files["stability/hellinger.svg"] = render_svg(
            list(series.items()), "line", title="squared Hellinger distance vs noise scale",
            xlabel="log10 lambda", ylabel="H^2",
        )
        for t, lam, h, gap in rows:
            out.lines.append(f"stability t={t:g} lambda={lam:g} hellinger_sq={h:.6g} mean_gap={gap:.4g}")
        worst = max(r for _, _, r, _ in ric)
        out.lines.append(f"stability riccati max_residual={worst:.3g}")
        return out


SUITES = {
    "quadratic": QuadraticSuite,
    "toy2d": Toy2dSuite,
    "train": TrainSuite,
    "diagnose": DiagnoseSuite,
    "stability": StabilitySuite,
}


def run_task(task):
    return SUITES[task[0]].run(task)
