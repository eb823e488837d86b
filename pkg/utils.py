import os
import json
import time
import hashlib
import logging
import multiprocessing

from copy import deepcopy
from functools import partial

import numpy as np
import pandas as pd
import statsmodels.stats.api as sms

import settings
import final_state_viz
from data import (ParameterDomain, ParameterVector, NoiseSpec, parameter_grid,
                  inject_noise, relative_param_error, write_snapshot,
                  read_snapshot, write_matrix, read_matrix, as_values)
from burgers import (BurgersConfig, InitialCondition, fom_solve,
                     fom_objective, fom_gradient_adjoint, fom_gradient_direct,
                     final_mismatch)
from pod import LinearReducer, pod_fit
from dynamics import FeatureLibrary, build_test_functions
from coefficients import (PROVIDERS, fit_provider, save_provider,
                          load_provider)
from latent import LatentModel, get_tableau, predict_full, TABLEAUS
from sensitivity import (TargetMismatch, surrogate_value,
                         reduced_direct_gradient, reduced_adjoint_gradient,
                         fd_gradient)
from optimizers import (OPTIMIZERS, OptProblem, get_optimizer,
                        rbf_objective_surrogate)


LOGGER = logging.getLogger('main.utils')

SECTIONS = ("burgers", "domain", "training", "noise", "surrogate", "target",
            "optimizers", "bench", "run")

# bench method -> identification form of the surrogate
METHODS = {"WLaSDI": "weak", "LaSDI": "strong", "Interpolation": None,
           "FOM": None}

REPORT_COLUMNS = ["noise", "method", "optimizer", "E2_percent", "f_true",
                  "train_s", "opt_s", "n_func", "n_grad"]

ALPHA = 0.05


def default_config():
    return deepcopy({
        "burgers": settings.BURGERS,
        "domain": settings.DOMAIN,
        "training": settings.TRAINING,
        "noise": settings.NOISE,
        "surrogate": settings.SURROGATE,
        "target": settings.TARGET,
        "optimizers": {name: getattr(settings, name) for name in OPTIMIZERS},
        "bench": settings.BENCH,
        "run": settings.RUN
    })


def deep_merge(base, override):
    merged = deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(merged.get(k), dict):
            merged[k] = deep_merge(merged[k], v)
        else:
            merged[k] = deepcopy(v)
    return merged


class ExperimentConfig:

    def __init__(self, adict):
        unknown = set(adict) - set(SECTIONS)
        if unknown:
            raise ValueError("unknown config sections %s" % sorted(unknown))
        self.vals = adict

        self.burgers = BurgersConfig.from_dict(adict["burgers"])
        self.domain = ParameterDomain(adict["domain"]["lower"],
                                      adict["domain"]["upper"])
        self.target = ParameterVector(adict["target"])
        if not self.domain.contains(self.target):
            raise ValueError("target %s outside the domain" % self.target)
        self.training_params = parameter_grid(adict["training"]["levels"])
        if not self.training_params:
            raise ValueError("training: empty parameter grid")
        for mu in self.training_params:
            self.domain.validate(mu)

        self.noise = adict["noise"]
        self.surrogate = adict["surrogate"]
        self.optimizers = adict["optimizers"]
        self.bench = adict["bench"]
        self.run = adict["run"]

        if self.noise["scale"] not in ("rms", "frobenius"):
            raise ValueError("noise.scale must be 'rms' or 'frobenius'")
        if self.surrogate["identification"] not in ("weak", "strong"):
            raise ValueError("surrogate.identification must be weak or strong")
        if self.surrogate["provider"] not in PROVIDERS:
            raise ValueError("surrogate.provider must be one of %s"
                             % ", ".join(PROVIDERS))
        if self.surrogate["tableau"] not in TABLEAUS:
            raise ValueError("surrogate.tableau must be one of %s"
                             % ", ".join(sorted(TABLEAUS)))
        for method in self.bench["methods"]:
            if method not in METHODS:
                raise ValueError("bench.methods: unknown method %s" % method)
        for name in self.bench["optimizers"]:
            if name not in OPTIMIZERS:
                raise ValueError("bench.optimizers: unknown optimizer %s" % name)

    @property
    def config_hash(self):
        """SHA-256 of the canonical json of everything but output location
        and thread count
        """
        vals = deepcopy(self.vals)
        vals["run"].pop("out_dir", None)
        vals["run"].pop("n_jobs", None)
        canonical = json.dumps(vals, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @property
    def out_dir(self):
        return self.run["out_dir"]

    @property
    def seed(self):
        return self.run["seed"]

    @property
    def n_jobs(self):
        return self.run["n_jobs"]

    def optimizer_settings(self, name):
        adict = dict(self.optimizers[name])
        if name == "DifferentialEvolution" and adict.get("seed") is None:
            adict["seed"] = self.seed
        return adict

    def with_overrides(self, seed=None, n_jobs=None, out_dir=None):
        vals = deepcopy(self.vals)
        for key, value in (("seed", seed), ("n_jobs", n_jobs),
                           ("out_dir", out_dir)):
            if value is not None:
                vals["run"][key] = value
        return ExperimentConfig(vals)


def load_config(path=None):
    """Defaults from settings, deep-merged with the json file at path
    """
    config = default_config()
    if path is not None:
        with open(path) as f:
            override = json.load(f)
        unknown = set(override) - set(SECTIONS)
        if unknown:
            raise ValueError("unknown config sections %s" % sorted(unknown))
        config = deep_merge(config, override)
    return ExperimentConfig(config)


class Result:
    """Per-seed outcomes of one (noise, method, optimizer) cell
    """

    def __init__(self, noise, method, optimizer):
        self.key = (noise, method, optimizer)
        self.seeds = []
        self.e2_list = []
        self.f_true_list = []
        self.train_s_list = []
        self.opt_s_list = []
        self.n_func_list = []
        self.n_grad_list = []
        self.mu_hat_list = []
        self.errors = []

    def add(self, row):
        if row.get("error"):
            self.errors.append(row["error"])
            return
        self.seeds.append(row["seed"])
        self.e2_list.append(row["E2_percent"])
        self.f_true_list.append(row["f_true"])
        self.train_s_list.append(row["train_s"])
        self.opt_s_list.append(row["opt_s"])
        self.n_func_list.append(row["n_func"])
        self.n_grad_list.append(row["n_grad"])
        self.mu_hat_list.append(row["mu_hat"])

    def get_median(self, alist):
        return float(np.median(alist)) if alist else float("nan")

    def get_interval(self, alist):
        if len(alist) < 2:
            return [float("nan"), float("nan")]
        lower, upper = sms.DescrStatsW(np.array(alist)).tconfint_mean(
            alpha=ALPHA)
        return [float(lower), float(upper)]

    def calc_medians(self):
        self.e2 = self.get_median(self.e2_list)
        self.e2_interval = self.get_interval(self.e2_list)
        self.f_true = self.get_median(self.f_true_list)
        self.train_s = self.get_median(self.train_s_list)
        self.opt_s = self.get_median(self.opt_s_list)
        self.n_func = self.get_median(self.n_func_list)
        self.n_grad = self.get_median(self.n_grad_list)

    def report_row(self):
        noise, method, optimizer = self.key
        return {"noise": noise, "method": method, "optimizer": optimizer,
                "E2_percent": self.e2, "f_true": self.f_true,
                "train_s": self.train_s, "opt_s": self.opt_s,
                "n_func": self.n_func, "n_grad": self.n_grad}

    def summary(self):
        noise, method, optimizer = self.key
        return {"noise": noise, "method": method, "optimizer": optimizer,
                "E2_percent": {"median": self.e2, "ci": self.e2_interval,
                               "obs": self.e2_list},
                "f_true": {"median": self.f_true, "obs": self.f_true_list},
                "train_s": self.train_s_list, "opt_s": self.opt_s_list,
                "n_func": self.n_func_list, "n_grad": self.n_grad_list,
                "mu_hat": self.mu_hat_list, "seeds": self.seeds,
                "errors": self.errors}

    def __str__(self):
        return "%s %s %s: E2 %.4f%% f %.3e" % (self.key + (self.e2,
                                                           self.f_true))


def generate_training_data(config):
    """FOM trajectories at every training parameter, in grid order
    """
    start = time.perf_counter()
    solve = partial(fom_solve, cfg=config.burgers)
    if config.n_jobs == 1:
        snapshots = [solve(mu.values) for mu in config.training_params]
    else:
        pool = multiprocessing.Pool(config.n_jobs)
        snapshots = pool.map(solve, [mu.values for mu in config.training_params])
        pool.close()
        pool.join()
    LOGGER.info("Solved %d training trajectories in %.1f s"
                % (len(snapshots), time.perf_counter() - start))
    return snapshots


def load_or_generate_training(config):
    """Training snapshots cached under out_dir/training/<config hash>
    """
    path = os.path.join(config.out_dir, "training", config.config_hash[:16])
    files = [os.path.join(path, "train_%02d.bin" % k)
             for k in range(len(config.training_params))]
    if all(os.path.exists(f) for f in files):
        LOGGER.info("Reading training trajectories from %s" % path)
        return [read_snapshot(f) for f in files]
    snapshots = generate_training_data(config)
    os.makedirs(path, exist_ok=True)
    for s, f in zip(snapshots, files):
        write_snapshot(s, f)
    return snapshots


def add_noise(snapshots, ratio, seed, scale="rms"):
    """Independent noise streams per trajectory spawned from one seed
    """
    children = np.random.SeedSequence(seed).spawn(len(snapshots))
    return [inject_noise(s, NoiseSpec(ratio, int(c.generate_state(1)[0]),
                                      scale))
            for s, c in zip(snapshots, children)]


def target_state(config):
    """Noise-free FOM final state at the target parameter, persisted once
    """
    path = os.path.join(config.out_dir, "target.bin")
    if os.path.exists(path):
        state, meta = read_matrix(path)
        if meta and meta.get("config_hash") == config.config_hash:
            return state[0]
    state = fom_solve(config.target, config.burgers).final
    os.makedirs(config.out_dir, exist_ok=True)
    write_matrix(path, state, {"mu": config.target.tolist(),
                               "config_hash": config.config_hash})
    return state


def build_fitter(config, identification, grid):
    if identification == "weak":
        return build_test_functions(grid, **config.surrogate["test_functions"])
    return grid


def train_surrogate(config, snapshots, identification=None, clean=None):
    """Reducer, dynamics and coefficient provider from training snapshots

    :param clean: noise-free trajectories; with the energy criterion the
        latent dimension is chosen on them and held fixed for the noisy fit
    :returns: (LatentModel, training seconds)
    """
    start = time.perf_counter()
    sur = config.surrogate
    identification = identification or sur["identification"]
    center = sur["center"]
    if sur["latent_dim"]:
        reducer = pod_fit(snapshots, {"fixed": sur["latent_dim"]}, center)
    elif clean is not None:
        k = pod_fit(clean, {"energy": sur["energy"]}, center).latent_dim
        reducer = pod_fit(snapshots, {"fixed": k}, center)
    else:
        reducer = pod_fit(snapshots, {"energy": sur["energy"]}, center)

    latents = [reducer.encode(s.data) for s in snapshots]
    params = np.array([as_values(s.mu) for s in snapshots])
    n_params = params.shape[1] if sur["provider"] == "Implicit" else 0
    library = FeatureLibrary(reducer.latent_dim, sur["degree"], n_params)
    grid = config.burgers.grid
    fitter = build_fitter(config, identification, grid)
    provider = fit_provider(sur["provider"], latents, params, library, fitter,
                            sur)
    model = LatentModel(reducer, library, provider,
                        get_tableau(sur["tableau"]), grid,
                        InitialCondition(config.burgers))
    seconds = time.perf_counter() - start
    LOGGER.info("Trained %s-form surrogate (N_z = %d, %s) in %.2f s"
                % (identification, reducer.latent_dim, provider, seconds))
    return model, seconds


def save_model(model, path, config, extra=None):
    os.makedirs(path, exist_ok=True)
    model.reducer.save(os.path.join(path, "reducer.bin"))
    save_provider(model.provider, os.path.join(path, "provider"))
    lib = model.library
    meta = {"config_hash": config.config_hash,
            "provider": model.provider.name,
            "library": {"latent_dim": lib.latent_dim, "degree": lib.degree,
                        "n_params": lib.n_params},
            "tableau": model.tableau.name,
            "burgers": model.initial.cfg.to_dict(),
            "grid": {"t_final": model.grid.t_final, "steps": model.grid.steps}}
    meta.update(extra or {})
    with open(os.path.join(path, "model.json"), "w") as out:
        json.dump(meta, out, sort_keys=True, indent=1)
    LOGGER.info("Saved model bundle to %s" % path)


def load_model(path):
    with open(os.path.join(path, "model.json")) as f:
        meta = json.load(f)
    reducer = LinearReducer.load(os.path.join(path, "reducer.bin"))
    provider = load_provider(os.path.join(path, "provider"))
    lib = meta["library"]
    library = FeatureLibrary(lib["latent_dim"], lib["degree"], lib["n_params"])
    burgers = BurgersConfig.from_dict(meta["burgers"])
    model = LatentModel(reducer, library, provider,
                        get_tableau(meta["tableau"]), burgers.grid,
                        InitialCondition(burgers))
    return model, meta


def surrogate_problem(model, target, domain, x0):
    objective = TargetMismatch(target)
    return OptProblem(
        domain,
        lambda mu: surrogate_value(model, mu, objective),
        x0,
        lambda mu: reduced_adjoint_gradient(model, mu, objective).gradient)


def fom_problem(config, target, x0):
    return OptProblem(
        config.domain,
        lambda mu: fom_objective(mu, config.burgers, target),
        x0,
        lambda mu: fom_gradient_adjoint(mu, config.burgers, target).gradient)


def interpolation_problem(config, snapshots, target, x0):
    """RBF interpolant of the objective values of the training trajectories
    """
    fs = [final_mismatch(s.final, target) for s in snapshots]
    rbf = rbf_objective_surrogate([s.mu for s in snapshots], fs,
                                  config.bench["rbf_kernel"])
    return OptProblem(config.domain, rbf, x0)


def evaluate_true(config, mu_hat, target):
    """Noise-free FOM re-evaluation: (f_true, E2 in percent, u_N)
    """
    u_final = fom_solve(mu_hat, config.burgers).final
    return (final_mismatch(u_final, target),
            100 * relative_param_error(mu_hat, config.target), u_final)


def run_optimization(config, problem, optimizer_name):
    optimizer = get_optimizer(optimizer_name,
                              config.optimizer_settings(optimizer_name))
    if optimizer.requires_gradient and problem.gradient is None:
        raise ValueError("%s needs a gradient" % optimizer_name)
    result = optimizer.minimize(problem)
    LOGGER.info("%s: %s" % (optimizer_name, result))
    return result


def run_cell(args):
    """All methods and optimizers for one (noise ratio, seed) pair
    """
    config, ratio, seed, clean, target = args
    x0 = config.domain.center()
    noisy = add_noise(clean, ratio, seed, config.noise["scale"])
    rows = []
    for method in config.bench["methods"]:
        problem, train_s, model = None, 0.0, None
        try:
            if METHODS[method] is not None:
                model, train_s = train_surrogate(
                    config, noisy, METHODS[method],
                    clean if ratio > 0 else None)
                save_model(model, os.path.join(
                    config.out_dir, "models",
                    "%s_noise%g_seed%d" % (method, ratio, seed)),
                    config, {"noise": ratio, "seed": seed,
                             "train_s": train_s})
                problem = surrogate_problem(model, target, config.domain, x0)
            elif method == "Interpolation":
                problem = interpolation_problem(config, noisy, target, x0)
            else:
                problem = fom_problem(config, target, x0)
        except Exception as e:
            LOGGER.error("%s at noise %g seed %d failed: %s"
                         % (method, ratio, seed, e))
            for name in config.bench["optimizers"]:
                rows.append(error_row(ratio, seed, method, name, e))
            continue
        for name in config.bench["optimizers"]:
            optimizer = get_optimizer(name, config.optimizer_settings(name))
            if optimizer.requires_gradient and problem.gradient is None:
                # no gradient for the objective interpolant
                rows.append(dict(error_row(ratio, seed, method, name, None),
                                 error="--"))
                continue
            try:
                result = optimizer.minimize(problem)
                f_true, e2, u_final = evaluate_true(config, result.mu_hat,
                                                    target)
            except Exception as e:
                LOGGER.error("%s/%s at noise %g seed %d failed: %s"
                             % (method, name, ratio, seed, e))
                rows.append(error_row(ratio, seed, method, name, e))
                continue
            LOGGER.info("noise %g seed %d %s/%s: E2 %.4f%%, f %.3e"
                        % (ratio, seed, method, name, e2, f_true))
            rows.append({"noise": ratio, "seed": seed, "method": method,
                         "optimizer": name, "E2_percent": e2,
                         "f_true": f_true, "train_s": train_s,
                         "opt_s": result.wall_seconds,
                         "n_func": result.n_func, "n_grad": result.n_grad,
                         "mu_hat": result.mu_hat.tolist(),
                         "converged": result.converged,
                         "u_final": u_final, "error": None})
    return rows


def error_row(ratio, seed, method, optimizer, error):
    return {"noise": ratio, "seed": seed, "method": method,
            "optimizer": optimizer, "error": str(error)}


def bench_cells(config, clean, target):
    """(config, ratio, seed, clean, target) per cell; a noise-free cell needs
    one seed only
    """
    cells = []
    for ratio in config.noise["ratios"]:
        seeds = config.noise["seeds"] if ratio > 0 else config.noise["seeds"][:1]
        for seed in seeds:
            cells.append([config, ratio, seed, clean, target])
    return cells


def run_cells(config, cells):
    if config.n_jobs == 1 or len(cells) < 2:
        outputs = [run_cell(c) for c in cells]
    else:
        pool = multiprocessing.Pool(config.n_jobs)
        outputs = pool.map(run_cell, cells)
        pool.close()
        pool.join()
    return [row for rows in outputs for row in rows]


def timed(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def measure_speedup(config, model, repeats=None):
    """Median wall time of predict_full against fom_solve at the target
    """
    repeats = repeats or config.bench["timing_repeats"]
    rom_s = timed(lambda: predict_full(model, config.target), repeats)
    fom_s = timed(lambda: fom_solve(config.target, config.burgers), repeats)
    LOGGER.info("FOM %.3f s, ROM %.4f s, speedup %.1f"
                % (fom_s, rom_s, fom_s / rom_s))
    return {"fom_s": fom_s, "rom_s": rom_s, "speedup": fom_s / rom_s,
            "repeats": repeats}


def write_plot_data(config, rows, target):
    """Two-column x,u csv files of final states for every cell
    """
    path = os.path.join(config.out_dir, "plots")
    os.makedirs(path, exist_ok=True)
    x = config.burgers.x
    pd.DataFrame({"x": x, "u": target}).to_csv(
        os.path.join(path, "target.csv"), index=False)
    written = set()
    for row in rows:
        if row.get("error") or "u_final" not in row:
            continue
        key = (row["noise"], row["method"], row["optimizer"])
        if key in written:
            continue
        written.add(key)
        pd.DataFrame({"x": x, "u": row["u_final"]}).to_csv(
            os.path.join(path, "final_noise%g_%s_%s.csv" % key), index=False)
    return path


def summarize(rows):
    results = {}
    for row in rows:
        key = (row["noise"], row["method"], row["optimizer"])
        if key not in results:
            results[key] = Result(*key)
        results[key].add(row)
    for r in results.values():
        r.calc_medians()
    return list(results.values())


def write_report(config, results):
    """bench.csv with the report columns and its rendered text table
    """
    df = pd.DataFrame([r.report_row() for r in results],
                      columns=REPORT_COLUMNS)
    os.makedirs(config.out_dir, exist_ok=True)
    df.to_csv(os.path.join(config.out_dir, "bench.csv"), index=False)
    table = df.to_string(index=False, na_rep="--", float_format="%.6g")
    with open(os.path.join(config.out_dir, "bench.txt"), "w") as out:
        out.write("config %s\n%s\n" % (config.config_hash, table))
    return df, table


def save(config, record):
    """Append one run record to out_dir/results.json
    """
    fname = os.path.join(config.out_dir, "results.json")
    if os.path.exists(fname):
        all_results = json.load(open(fname))
    else:
        all_results = []
    all_results.append(record)
    out = open(fname, "w")
    json.dump(all_results, out)
    out.close()


def run_bench(config):
    """The noise x method x optimizer matrix; returns the report frame
    """
    if config.noise["ratios"]:
        clean = load_or_generate_training(config)
        target = target_state(config)
    else:
        clean, target = [], None
    methods = list(config.bench["methods"])
    if config.bench["include_fom"] and "FOM" not in methods:
        methods.append("FOM")
    bench_config = ExperimentConfig(deep_merge(config.vals,
                                               {"bench": {"methods": methods}}))
    rows = run_cells(bench_config, bench_cells(bench_config, clean, target))
    # the FOM column only makes sense without training noise
    rows = [r for r in rows if r["method"] != "FOM" or r["noise"] == 0]
    results = summarize(rows)
    df, table = write_report(config, results)
    LOGGER.info("Bench report:\n%s" % table)

    record = {"config_hash": config.config_hash, "config": config.vals,
              "summary": [r.summary() for r in results]}
    if rows:
        plots = write_plot_data(config, rows, target)
        if config.bench["plot"]:
            LOGGER.info("Rendered %s" % final_state_viz.render(plots))
        if "WLaSDI" in methods and config.bench["timing_repeats"] > 0:
            bundle = os.path.join(config.out_dir, "models", "WLaSDI_noise0_seed%d"
                                  % config.noise["seeds"][0])
            if os.path.exists(os.path.join(bundle, "model.json")):
                model, _ = load_model(bundle)
            else:
                model, _ = train_surrogate(config, clean, "weak")
            record["speedup"] = measure_speedup(config, model)
    save(config, record)
    return df


def relative_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def gradcheck(config, model=None, n_points=5, h=1e-6, include_fom=True):
    """Max relative errors between reduced direct, reduced adjoint and
    central differences at random parameters, plus the FOM pair at the
    domain centre
    """
    if model is None:
        model, _ = train_surrogate(config, load_or_generate_training(config),
                                   "weak")
    target = target_state(config)
    objective = TargetMismatch(target)
    mus = config.domain.sample(n_points, config.seed)
    errors = {"direct_vs_adjoint": 0.0, "direct_vs_fd": 0.0,
              "adjoint_vs_fd": 0.0}
    for mu in mus:
        direct = reduced_direct_gradient(model, mu, objective).gradient
        adjoint = reduced_adjoint_gradient(model, mu, objective).gradient
        fd = fd_gradient(lambda m: surrogate_value(model, m, objective), mu,
                         h).gradient
        errors["direct_vs_adjoint"] = max(errors["direct_vs_adjoint"],
                                          relative_error(direct, adjoint))
        errors["direct_vs_fd"] = max(errors["direct_vs_fd"],
                                     relative_error(direct, fd))
        errors["adjoint_vs_fd"] = max(errors["adjoint_vs_fd"],
                                      relative_error(adjoint, fd))
    if include_fom:
        mu = config.domain.center().values
        cfg = config.burgers
        snapshots = fom_solve(mu, cfg)
        direct = fom_gradient_direct(mu, cfg, target, snapshots).gradient
        adjoint = fom_gradient_adjoint(mu, cfg, target, snapshots).gradient
        fd = fd_gradient(lambda m: fom_objective(m, cfg, target), mu,
                         h).gradient
        errors["fom_direct_vs_adjoint"] = relative_error(direct, adjoint)
        errors["fom_adjoint_vs_fd"] = relative_error(adjoint, fd)
    for k, v in errors.items():
        LOGGER.info("%s: %.3e" % (k, v))
    return errors
