BURGERS = {
        "x_min": -10.0,
        "x_max": 10.0,
        "dx": 0.02,
        "t_final": 1.0,
        "steps": 1000,
        "upwind": "backward", # forward, backward
        "newton_tol": 1e-10,
        "newton_max_iter": 50
        }

DOMAIN = {
        "lower": [0.7, 0.9, 0.7, 0.9],
        "upper": [0.9, 1.1, 0.9, 1.1]
        }

# all combinations of the levels are solved with the FOM for training
TRAINING = {
        "levels": [[0.7, 0.9], [0.9, 1.1], [0.7, 0.9], [0.9, 1.1]]
        }

NOISE = {
        "ratios": [0.0, 0.2, 0.4],
        "seeds": [0, 1, 2],
        "scale": "rms" # rms, frobenius
        }

SURROGATE = {
        "identification": "weak", # weak (WLaSDI), strong (LaSDI)
        "energy": 0.9999,
        "latent_dim": None, # fixed N_z (15: reference size), overrides energy
        "center": False,
        "degree": 1,
        "provider": "Implicit", # Global, Implicit, RBF, Convex, GP
        "test_functions": {"count": 200, "radius_frac": 0.1, "degree": 3},
        "tableau": "rk4", # euler, heun, rk4
        "rbf_shape": None,
        "gp_amplitude": None,
        "gp_lengthscale": None,
        "gp_jitter": 1e-8
        }

TARGET = [0.75, 1.05, 0.85, 0.95]

BFGS = {
        "grad_tol": 1e-8,
        "max_iter": 200,
        "armijo": 1e-4,
        "backtrack": 0.5,
        "min_step": 1e-12,
        "max_step": None # defaults to the widest side of the domain
        }

NelderMead = {
        "tol": 1e-8,
        "max_iter": 2000,
        "initial_step": 0.05
        }

DifferentialEvolution = {
        "pop": 20,
        "F": 0.7,
        "CR": 0.9,
        "max_gen": 100,
        "seed": 0,
        "tol": 1e-10
        }

BENCH = {
        "methods": ["WLaSDI", "LaSDI", "Interpolation"],
        "optimizers": ["NelderMead", "BFGS"],
        "include_fom": False,
        "timing_repeats": 3,
        "rbf_kernel": "gaussian",
        "plot": False
        }

RUN = {
        "seed": 0,
        "n_jobs": 1,
        "out_dir": "results"
        }
