"""Command line front end

    python run.py [--config c.json] [--out dir] [--seed s] [--threads n] [--quiet] \
        {fom-run,train,predict,optimize,bench,gradcheck} ...

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

import os
import sys
import json
import time
import logging
import argparse

import numpy as np

from data import NumericalError, ParameterVector, write_snapshot
from burgers import fom_solve
from latent import predict_full
from get_logger import get_logger
import utils


LOGGER = None


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def mu_arg(values, config):
    mu = ParameterVector(values)
    config.domain.validate(mu)
    return mu


def mu_tag(mu):
    return "_".join("%g" % x for x in mu.values)


def cmd_fom_run(config, args):
    mu = mu_arg(args.mu, config)
    snapshots = fom_solve(mu, config.burgers)
    path = args.output or os.path.join(config.out_dir, "fom_%s.bin" % mu_tag(mu))
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    write_snapshot(snapshots, path)
    LOGGER.info("Wrote %dx%d trajectory to %s" % (snapshots.shape + (path,)))
    return path


def cmd_train(config, args):
    identification = utils.METHODS[args.method]
    if identification is None:
        raise ValueError("train needs a surrogate method (WLaSDI or LaSDI)")
    clean = utils.load_or_generate_training(config)
    snapshots = utils.add_noise(clean, args.noise, args.noise_seed,
                                config.noise["scale"])
    model, seconds = utils.train_surrogate(
        config, snapshots, identification, clean if args.noise > 0 else None)
    path = args.model or os.path.join(
        config.out_dir, "models",
        "%s_noise%g_seed%d" % (args.method, args.noise, args.noise_seed))
    utils.save_model(model, path, config, {"noise": args.noise,
                                           "seed": args.noise_seed})
    # the bundle holds no wall times, training time goes to results.json
    utils.save(config, {"config_hash": config.config_hash,
                        "train": {"model": path, "method": args.method,
                                  "noise": args.noise,
                                  "seed": args.noise_seed,
                                  "train_s": seconds}})
    return path


def cmd_predict(config, args):
    model, _ = utils.load_model(args.model)
    mu = mu_arg(args.mu, config)
    snapshots = predict_full(model, mu)
    path = args.output or os.path.join(config.out_dir,
                                       "predict_%s.bin" % mu_tag(mu))
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    write_snapshot(snapshots, path)
    LOGGER.info("Wrote surrogate trajectory to %s" % path)
    return path


def cmd_optimize(config, args):
    target = utils.target_state(config)
    x0 = config.domain.center()
    if args.surrogate == "fom":
        problem, method = utils.fom_problem(config, target, x0), "FOM"
    elif args.surrogate == "interpolation":
        snapshots = utils.load_or_generate_training(config)
        problem = utils.interpolation_problem(config, snapshots, target, x0)
        method = "Interpolation"
    else:
        if not args.model:
            raise ValueError("optimize needs --model or --surrogate")
        model, meta = utils.load_model(args.model)
        problem = utils.surrogate_problem(model, target, config.domain, x0)
        method = os.path.basename(os.path.normpath(args.model))
    result = utils.run_optimization(config, problem, args.optimizer)
    f_true, e2, _ = utils.evaluate_true(config, result.mu_hat, target)
    row = {"method": method, "optimizer": args.optimizer,
           "E2_percent": e2, "f_true": f_true, "opt_s": result.wall_seconds,
           "n_func": result.n_func, "n_grad": result.n_grad,
           "mu_hat": result.mu_hat.tolist(), "converged": result.converged,
           "message": result.message}
    LOGGER.info("E2 = %.4f%%, f(u_N) = %.4e" % (e2, f_true))
    utils.save(config, {"config_hash": config.config_hash, "optimize": row})
    print(json.dumps(row, sort_keys=True))
    return row


def cmd_bench(config, args):
    df = utils.run_bench(config)
    print(df.to_string(index=False, na_rep="--", float_format="%.6g"))
    return df


def cmd_gradcheck(config, args):
    model = utils.load_model(args.model)[0] if args.model else None
    errors = utils.gradcheck(config, model, args.points, args.h,
                             not args.skip_fom)
    for k, v in errors.items():
        print("%-24s %.3e" % (k, v))
    return errors


COMMANDS = {"fom-run": cmd_fom_run, "train": cmd_train,
            "predict": cmd_predict, "optimize": cmd_optimize,
            "bench": cmd_bench, "gradcheck": cmd_gradcheck}


def get_parser():
    parser = ArgumentParser(prog="wlasdi")
    parser.add_argument("--config", help="json file merged over settings.py")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--quiet", action="store_true",
                        help="only warnings and errors on stderr")
    sub = parser.add_subparsers(dest="command")
    sub.required = True

    p = sub.add_parser("fom-run")
    p.add_argument("--mu", type=float, nargs="+", required=True)
    p.add_argument("--output")

    p = sub.add_parser("train")
    p.add_argument("--method", default="WLaSDI", choices=["WLaSDI", "LaSDI"])
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--model", help="bundle directory to write")

    p = sub.add_parser("predict")
    p.add_argument("--model", required=True)
    p.add_argument("--mu", type=float, nargs="+", required=True)
    p.add_argument("--output")

    p = sub.add_parser("optimize")
    p.add_argument("--model")
    p.add_argument("--surrogate", choices=["model", "fom", "interpolation"],
                   default="model")
    p.add_argument("--optimizer", default="BFGS",
                   choices=list(utils.OPTIMIZERS))

    sub.add_parser("bench")

    p = sub.add_parser("gradcheck")
    p.add_argument("--model")
    p.add_argument("--points", type=int, default=5)
    p.add_argument("--h", type=float, default=1e-6)
    p.add_argument("--skip-fom", action="store_true")
    return parser


def main(argv=None):
    global LOGGER

    start = time.time()
    try:
        args = get_parser().parse_args(argv)
        config = utils.load_config(args.config).with_overrides(
            args.seed, args.threads, args.out)
        LOGGER = get_logger("main", os.path.join(config.out_dir, "logs"),
                            args.command,
                            logging.WARNING if args.quiet else logging.INFO)
    except (UsageError, ValueError, KeyError, OSError) as e:
        sys.stderr.write("error: %s\n" % e)
        return 1

    LOGGER.info("Config %s" % config.config_hash)
    try:
        COMMANDS[args.command](config, args)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as e:
        # LinAlgError derives from ValueError, so this comes first
        LOGGER.error("%s failed with a numerical error: %s" % (args.command, e))
        return 2
    except (ValueError, KeyError, OSError) as e:
        LOGGER.error("%s failed: %s" % (args.command, e))
        return 1

    m, s = divmod(time.time() - start, 60)
    h, m = divmod(m, 60)
    LOGGER.info("Took %d hours %02d minutes %02d seconds" % (h, m, s))
    return 0


if __name__ == "__main__":
    sys.exit(main())
