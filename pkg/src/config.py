# src/config.py
import os
from dataclasses import dataclass, replace
from fractions import Fraction

from dotenv import load_dotenv

from .errors import ConfigError
from .utils import parse_rational

load_dotenv()  # .envファイルを読み込む

ENGINES = ("matrix", "region", "montecarlo")
DEFAULT_MAX_DEPTH = 12
DEFAULT_MAX_CELLS = 64
DEFAULT_SAMPLES = 10000
DEFAULT_CONFIDENCE = 0.99
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclass(frozen=True)
class EngineOptions:
    """エンジン選択と各エンジンのパラメータ。式とは独立に受け渡す。"""

    engine: str = "matrix"
    delta: Fraction | None = None
    max_depth: int = DEFAULT_MAX_DEPTH
    samples: int = DEFAULT_SAMPLES
    seed: int = 0
    confidence: float = DEFAULT_CONFIDENCE
    strict: bool = False
    jobs: int = 1
    max_cells: int = DEFAULT_MAX_CELLS

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigError(f"未知のエンジンです: {self.engine} (選択肢: {', '.join(ENGINES)})")
        if self.max_depth < 0:
            raise ConfigError("max_depth は0以上で指定してください。")
        if self.samples < 1:
            raise ConfigError("samples は1以上で指定してください。")
        if not 0 < self.confidence < 1:
            raise ConfigError("confidence は0と1の間で指定してください。")
        if self.max_cells < 1:
            raise ConfigError("max_cells は1以上で指定してください。")
        if self.jobs < 1 and self.jobs != -1:
            raise ConfigError(f"jobs は1以上か -1 (全コア) で指定してください: {self.jobs}")


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name} 環境変数は整数で指定してください: {raw!r}") from None


def _env_float(name: str, default: float) -> float:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{name} 環境変数は数値で指定してください: {raw!r}") from None


def _env_bool(name: str, default: bool) -> bool:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return default
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{name} 環境変数は true/false で指定してください: {raw!r}")


def _env_delta() -> Fraction | None:
    raw = os.environ.get("SAMC_DELTA")
    if raw is None or raw.strip() == "":
        return None
    try:
        return parse_rational(raw)
    except ValueError:
        raise ConfigError(f"SAMC_DELTA 環境変数は有理数で指定してください: {raw!r}") from None


def get_log_level() -> str:
    level = (os.environ.get("SAMC_LOG_LEVEL") or "INFO").strip().upper()
    if level not in LOG_LEVELS:
        raise ConfigError(f"SAMC_LOG_LEVEL 環境変数は {', '.join(LOG_LEVELS)} のいずれかで指定してください: {level!r}")
    return level


def get_engine_options(**overrides) -> EngineOptions:
    """
    環境変数から EngineOptions を組み立てます。
    None 以外のキーワード引数(CLIフラグ)は環境変数より優先されます。
    """
    options = EngineOptions(
        engine=os.environ.get("SAMC_ENGINE", "matrix"),
        delta=_env_delta(),
        max_depth=_env_int("SAMC_MAX_DEPTH", DEFAULT_MAX_DEPTH),
        samples=_env_int("SAMC_SAMPLES", DEFAULT_SAMPLES),
        seed=_env_int("SAMC_SEED", 0),
        confidence=_env_float("SAMC_CONFIDENCE", DEFAULT_CONFIDENCE),
        strict=_env_bool("SAMC_STRICT", False),
        jobs=_env_int("SAMC_JOBS", 1),
        max_cells=_env_int("SAMC_MAX_CELLS", DEFAULT_MAX_CELLS),
    )
    overrides = {key: value for key, value in overrides.items() if value is not None}
    return replace(options, **overrides) if overrides else options
