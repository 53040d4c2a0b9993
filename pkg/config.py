import os
import logging
from dataclasses import dataclass, fields, replace

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

load_dotenv()


class ConfigError(Exception):
    """Raised when a configuration value violates a hard invariant"""


def _env_bool(name: str, default: str) -> bool:
    return os.getenv(name, default).strip().lower() in ('1', 'true', 'yes', 'on')


@dataclass(frozen=True)
class Config:
    # Randomness
    seed: int = 1
    max_tie_retries: int = 32
    perturbation_scale: int = 1

    # Landmark sampling (c from the sampling probability c*log2(n)/2^i)
    landmark_c: float = 4.0
    dclose_constant: int = 4

    # Trapezoid / geometric prefixes
    epsilon: float = 0.25

    # Query behaviour
    hardened: bool = True
    audit_answers: bool = False
    max_reroutes: int = 4
    probes_per_flow: int = 6

    # Build limits
    mem_cap_entries: int = 5_000_000
    jobs: int = 1

    # IO
    db_path: str = 'oracle_runs.db'
    output_dir: str = '.'
    log_level: str = 'INFO'

    @classmethod
    def from_env(cls) -> 'Config':
        """Build a config from environment variables (a local .env is merged first)"""
        cfg = cls(
            seed=int(os.getenv('ORACLE_SEED', 1)),
            max_tie_retries=int(os.getenv('MAX_TIE_RETRIES', 32)),
            perturbation_scale=int(os.getenv('PERTURBATION_SCALE', 1)),
            landmark_c=float(os.getenv('LANDMARK_C', 4.0)),
            dclose_constant=int(os.getenv('DCLOSE_CONSTANT', 4)),
            epsilon=float(os.getenv('EPSILON', 0.25)),
            hardened=_env_bool('HARDENED_MODE', 'true'),
            audit_answers=_env_bool('AUDIT_ANSWERS', 'false'),
            max_reroutes=int(os.getenv('MAX_REROUTES', 4)),
            probes_per_flow=int(os.getenv('PROBES_PER_FLOW', 6)),
            mem_cap_entries=int(os.getenv('MEM_CAP_ENTRIES', 5_000_000)),
            jobs=int(os.getenv('JOBS', 1)),
            db_path=os.getenv('DB_PATH', 'oracle_runs.db'),
            output_dir=os.getenv('OUTPUT_DIR', '.'),
            log_level=os.getenv('LOG_LEVEL', 'INFO'),
        )
        cfg.validate()
        return cfg

    def with_overrides(self, **overrides) -> 'Config':
        """Return a copy with the non-None overrides applied (CLI flags)"""
        known = {f.name for f in fields(self)}
        changes = {k: v for k, v in overrides.items() if v is not None and k in known}
        cfg = replace(self, **changes)
        cfg.validate()
        return cfg

    def validate(self):
        """Validate configuration settings"""
        if not 0 < self.epsilon <= 1:
            raise ConfigError(f"EPSILON must lie in (0, 1], got {self.epsilon}")

        if self.landmark_c < 1:
            raise ConfigError(f"LANDMARK_C must be >= 1, got {self.landmark_c}")

        if self.perturbation_scale < 1:
            raise ConfigError(f"PERTURBATION_SCALE must be >= 1, got {self.perturbation_scale}")

        for name in ('dclose_constant', 'probes_per_flow', 'jobs', 'max_tie_retries', 'mem_cap_entries'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name.upper()} must be >= 1, got {getattr(self, name)}")

        if self.max_reroutes < 0:
            raise ConfigError(f"MAX_REROUTES must be >= 0, got {self.max_reroutes}")

        if not self.hardened and self.audit_answers:
            logger.info("Strict mode never audits answers; AUDIT_ANSWERS is ignored")


# Global config instance
config = Config.from_env()
