import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

def get_env(key: str, default: str = '') -> str:
    """Get a setting from the environment (or the .env file)."""
    value = os.getenv(key)
    if value is None or value.strip() == '':
        return default
    return value.strip()

def get_int_env(key: str, default: int) -> int:
    """Integer setting; a malformed value falls back to the default and is reported by Config.validate."""
    try:
        return int(get_env(key, str(default)))
    except ValueError:
        return default

class Config:
    """Configuration management for the pursuit game toolkit."""

    # Run Configuration
    DEFAULT_SEED = get_int_env('PURSUIT_SEED', 0)
    LOG_LEVEL = get_env('PURSUIT_LOG_LEVEL', 'WARNING').upper()
    OUTPUT_DIR = get_env('PURSUIT_OUTPUT_DIR', 'runs')
    MAX_WORKERS = get_int_env('PURSUIT_MAX_WORKERS', 4)

    # Geometry Configuration
    CONTAINMENT_TOL = 1e-9

    # Assumption (A) solver
    ASSUMPTION_STARTS = 32
    ASSUMPTION_ITERS = 10_000
    ASSUMPTION_PATIENCE = 2_000
    ASSUMPTION_ABSENT_BELOW = -1e-6
    ASSUMPTION_MARGINAL_BELOW = 1e-6

    # Value solver
    OPTIMIZER_STARTS = 64
    OPTIMIZER_ITERS = 5_000
    OPTIMIZER_PATIENCE = 500
    POLISH_MAX_DIMENSION = 64
    POLISH_MAX_CONSTRAINTS = 200
    POLISH_CANDIDATES = 4
    ORACLE_GRID = 41
    ORACLE_MAX_DIMENSION = 4
    ORACLE_SPHERE_SAMPLES = 2_000
    ORACLE_LIPSCHITZ = 2.0
    VALUE_TOL = 1e-4

    # Simulation Configuration
    DEFAULT_STEPS = 1_000
    DEFAULT_EPSILON = 1e-3
    CAPTURE_TOL = 1e-6
    INTEGRAL_BUDGET_TOL = 1e-6
    GEOMETRIC_BUDGET_TOL = 1e-9

    # Certification Configuration
    UPPER_ENVELOPE = 0.05
    LOWER_SLACK = 1e-3

    @classmethod
    def validate(cls) -> bool:
        """Validate the configuration."""
        for key in ('PURSUIT_SEED', 'PURSUIT_MAX_WORKERS'):
            raw = get_env(key)
            try:
                int(raw or '0')
            except ValueError:
                raise ValueError(f"{key} must be an integer, got {raw!r}") from None
        if cls.MAX_WORKERS < 1:
            raise ValueError("PURSUIT_MAX_WORKERS must be at least 1")
        if cls.LOG_LEVEL not in {'DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'}:
            raise ValueError(f"PURSUIT_LOG_LEVEL is not a logging level: {cls.LOG_LEVEL}")

        return True

    @classmethod
    def get_output_path(cls, filename: str, out_dir: str = None) -> str:
        """Get the full path for a run artifact."""
        return os.path.join(out_dir or cls.OUTPUT_DIR, filename)

# Global config instance
config = Config()
