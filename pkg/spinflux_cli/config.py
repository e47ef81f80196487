import os
from dataclasses import dataclass
from functools import lru_cache

from dotenv import load_dotenv

load_dotenv()


def _float_env(name: str, default: float) -> float:
    raw = os.environ.get(name, "").strip()
    return float(raw) if raw else default


def _int_env(name: str, default: int) -> int:
    raw = os.environ.get(name, "").strip()
    return int(raw) if raw else default


@dataclass(frozen=True)
class Settings:
    hull_epsilon: float = 1e-9        # interior margin for density inversion
    grid_epsilon: float = 0.02        # shrink of the hull for certification grids and the solver
    identity_rtol: float = 1e-12
    identity_atol: float = 1e-14
    cert_threshold: float = 1e-10
    workers: int = 1
    tree_refresh: int = 10_000_000    # events between exact Fenwick rebuilds
    log_level: str = "WARNING"


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Settings from the environment (a .env file is honoured), falling back to defaults."""
    return Settings(
        hull_epsilon=_float_env("SPINFLUX_HULL_EPSILON", Settings.hull_epsilon),
        grid_epsilon=_float_env("SPINFLUX_GRID_EPSILON", Settings.grid_epsilon),
        identity_rtol=_float_env("SPINFLUX_IDENTITY_RTOL", Settings.identity_rtol),
        identity_atol=_float_env("SPINFLUX_IDENTITY_ATOL", Settings.identity_atol),
        cert_threshold=_float_env("SPINFLUX_CERT_THRESHOLD", Settings.cert_threshold),
        workers=_int_env("SPINFLUX_WORKERS", os.cpu_count() or 1),
        tree_refresh=_int_env("SPINFLUX_TREE_REFRESH", Settings.tree_refresh),
        log_level=os.environ.get("SPINFLUX_LOG_LEVEL", Settings.log_level).strip().upper(),
    )
