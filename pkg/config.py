"""
TOML configuration for the hallmark command line.

Sections: [keys], [pgws], [ref], [attack], [corpus], [logging]. Every section maps
onto a frozen dataclass; missing keys take the owning module's defaults and unknown
sections or keys are rejected.
"""

import dataclasses
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from core_image import DEFAULT_CORPUS_SIZE, CorpusSpec
from eval_attack import DEFAULT_TRIPLE_SEED, AttackSettings
from pgws import PgwsParams
from ref import CompareParams

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEFAULT_CORPUS_SEED = 0
DEFAULT_CORPUS_COUNT = 100
SYNTHETIC_PREFIX = "synthetic:"
DEFAULT_CORPUS_SOURCE = (
    f"{SYNTHETIC_PREFIX}{DEFAULT_CORPUS_SEED}:{DEFAULT_CORPUS_COUNT}:{DEFAULT_CORPUS_SIZE}"
)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class ConfigError(ValueError):
    """Raised for malformed configuration files or values."""


@dataclass(frozen=True)
class KeySettings:
    secret_key: str = ""
    public_key: str = ""


@dataclass(frozen=True)
class CorpusSettings:
    """source is synthetic:seed:count:size or a directory path."""

    source: str = DEFAULT_CORPUS_SOURCE
    triple_seed: int = DEFAULT_TRIPLE_SEED

    def __post_init__(self):
        parse_corpus_source(self.source)


@dataclass(frozen=True)
class LoggingSettings:
    level: str = "INFO"
    file: str = ""
    format: str = LOG_FORMAT
    directory: str = ""

    def __post_init__(self):
        object.__setattr__(self, "level", self.level.upper())
        if self.level not in LOG_LEVELS:
            raise ConfigError(f"Unknown log level {self.level!r}")


@dataclass(frozen=True)
class Config:
    keys: KeySettings = field(default_factory=KeySettings)
    pgws: PgwsParams = field(default_factory=PgwsParams)
    ref: CompareParams = field(default_factory=CompareParams)
    attack: AttackSettings = field(default_factory=AttackSettings)
    corpus: CorpusSettings = field(default_factory=CorpusSettings)
    logging: LoggingSettings = field(default_factory=LoggingSettings)

    def to_dict(self) -> dict:
        """Full effective configuration, as echoed into report headers."""
        return {
            "keys": dataclasses.asdict(self.keys),
            "pgws": self.pgws.to_dict(),
            "ref": {"tau": self.ref.tau},
            "attack": self.attack.to_dict(),
            "corpus": dataclasses.asdict(self.corpus),
            "logging": dataclasses.asdict(self.logging),
        }


def parse_corpus_source(source: str) -> Union[CorpusSpec, Path]:
    """
    Resolve a corpus source string.

    Returns:
        CorpusSpec for synthetic:seed:count:size, otherwise the directory Path

    Raises:
        ConfigError: If a synthetic source is malformed
    """
    if not source.startswith(SYNTHETIC_PREFIX):
        return Path(source)
    parts = source[len(SYNTHETIC_PREFIX) :].split(":")
    if len(parts) != 3:
        raise ConfigError(f"Synthetic corpus must be synthetic:seed:count:size, got {source!r}")
    try:
        seed, count, size = (int(p) for p in parts)
        return CorpusSpec(seed=seed, count=count, width=size, height=size)
    except ValueError as e:
        raise ConfigError(f"Invalid synthetic corpus {source!r}: {e}") from e


def _section(cls, name: str, values, builder=None):
    if not isinstance(values, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"Unknown key(s) in [{name}]: {', '.join(unknown)}")
    try:
        return builder(values) if builder else cls(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid [{name}] section: {e}") from e


def config_from_dict(data: dict) -> Config:
    """
    Build a Config from parsed TOML.

    Raises:
        ConfigError: On unknown sections, unknown keys or invalid values
    """
    sections = {f.name: f for f in dataclasses.fields(Config)}
    unknown = sorted(set(data) - set(sections))
    if unknown:
        raise ConfigError(f"Unknown config section(s): {', '.join(unknown)}")

    return Config(
        keys=_section(KeySettings, "keys", data.get("keys", {})),
        pgws=_section(PgwsParams, "pgws", data.get("pgws", {}), PgwsParams.from_dict),
        ref=_section(CompareParams, "ref", data.get("ref", {})),
        attack=_section(AttackSettings, "attack", data.get("attack", {})),
        corpus=_section(CorpusSettings, "corpus", data.get("corpus", {})),
        logging=_section(LoggingSettings, "logging", data.get("logging", {})),
    )


def load_config(path: Optional[PathLike] = None) -> Config:
    """
    Load a TOML config file; None gives the all-defaults config.

    Raises:
        OSError: If the file cannot be read
        ConfigError: If the file is not valid TOML or holds invalid settings
    """
    if path is None:
        return Config()
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    config = config_from_dict(data)
    logger.debug("Loaded config from %s", path)
    return config
