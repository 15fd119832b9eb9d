import os
from typing import Dict, Any


def get_numeric_config() -> Dict[str, Any]:
    """Get numerical tolerances from environment variables"""
    return {
        "tol_lyap": float(os.getenv("IRL_TOL_LYAP", 1e-9)),
        "tol_gare": float(os.getenv("IRL_TOL_GARE", 1e-7)),
        "eps_hurwitz": float(os.getenv("IRL_EPS_HURWITZ", 1e-9)),
        "eps_psd": float(os.getenv("IRL_EPS_PSD", 1e-8)),
        "rank_tol": float(os.getenv("IRL_RANK_TOL", 1e-10)),
        "cond_max": float(os.getenv("IRL_COND_MAX", 1e10)),
        "blowup_bound": float(os.getenv("IRL_BLOWUP_BOUND", 1e6)),
        "gare_max_iters": int(os.getenv("IRL_GARE_MAX_ITERS", 100)),
    }


def get_app_config() -> Dict[str, Any]:
    """Get application configuration from environment variables"""
    return {
        "debug": os.getenv("DEBUG", "False").lower() == "true",
        "log_level": os.getenv("LOG_LEVEL", "INFO"),
        "output_dir": os.getenv("IRL_OUTPUT_DIR", "runs"),
        "scenario_dir": os.getenv("IRL_SCENARIO_DIR", "scenarios"),
    }
