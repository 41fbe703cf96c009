"""
Utility functions for the groupoidification engine
Provides logging setup, configuration, errors, validation reports and search budgets
"""

import os
import json
import logging
import threading
from typing import Dict, List, Any, Optional, Union, Tuple
from pathlib import Path

from dotenv import load_dotenv
from pydantic import BaseModel, Field
from sympy import Rational, Integer

# Set up logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


class GroupoidifyError(Exception):
    """Base class for every error raised by the engine"""


class StructuralError(GroupoidifyError):
    """Identifiers that do not resolve, or tables that are not well formed"""


class BoundaryMismatchError(GroupoidifyError):
    """Spans, 2-morphisms or diagrams whose boundaries do not line up"""


class SizeGuardError(GroupoidifyError):
    """A groupoid would exceed the configured morphism limit"""


class BudgetExhaustedError(GroupoidifyError):
    """A search ran out of nodes or was cancelled"""


class GroupSpecError(GroupoidifyError):
    """Group spec text that cannot be resolved to a supported finite group"""


class DiagramSyntaxError(GroupoidifyError):
    """Parse error in the diagram language"""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class DiagramTypeError(GroupoidifyError):
    """Boundary mismatch found while typechecking a diagram"""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class EvaluationError(GroupoidifyError):
    """A diagram that has no counterpart in the span model"""


class RewriteError(GroupoidifyError):
    """Diagram rewriting that fails to make progress towards a normal form"""


class ValidationReport(BaseModel):
    """Outcome of validating a groupoid, functor or 2-morphism"""
    errors: List[str] = Field(default_factory=list, description="Violated axioms, one line each")
    structural: bool = Field(False, description="True when the input did not even resolve")

    @property
    def valid(self) -> bool:
        return not self.errors

    def add(self, message: str):
        self.errors.append(message)

    def extend(self, other: "ValidationReport", prefix: str = ""):
        self.errors.extend(f"{prefix}{e}" for e in other.errors)
        self.structural = self.structural or other.structural

    def as_tuple(self) -> Tuple[bool, List[str]]:
        return self.valid, list(self.errors)


class SearchBudget:
    """Node counter with cooperative cancellation for backtracking searches"""

    def __init__(self, max_nodes: Optional[int] = None, cancel_event: Optional[threading.Event] = None):
        self.max_nodes = max_nodes
        self.cancel_event = cancel_event or threading.Event()
        self.used = 0
        self._lock = threading.Lock()

    def tick(self, n: int = 1):
        with self._lock:
            self.used += n
            used = self.used
        if self.cancel_event.is_set():
            raise BudgetExhaustedError(f"search cancelled after {used} nodes")
        if self.max_nodes is not None and used > self.max_nodes:
            raise BudgetExhaustedError(f"search budget of {self.max_nodes} nodes exhausted")

    def cancel(self):
        self.cancel_event.set()

    @property
    def remaining(self) -> Optional[int]:
        if self.max_nodes is None:
            return None
        return max(self.max_nodes - self.used, 0)


def tick(budget: Optional[SearchBudget], n: int = 1):
    """Advance an optional budget"""
    if budget is not None:
        budget.tick(n)


class ConfigManager:
    """Configuration management"""

    DEFAULT_CONFIG = {
        'max_morphisms': 20000,
        'max_group_order': 24,
        'max_symmetric_degree': 4,
        'search_budget': 2_000_000,
        'jobs': 1,
        'default_mode': 'equivalence',
        'default_semantics': 'span',
        'confluence_samples': 1000,
        'confluence_max_generators': 12,
        'log_level': 'INFO'
    }

    ENV_OVERRIDES = {
        'GROUPOIDIFY_MAX_MORPHISMS': ('max_morphisms', int),
        'GROUPOIDIFY_SEARCH_BUDGET': ('search_budget', int),
        'GROUPOIDIFY_JOBS': ('jobs', int),
        'GROUPOIDIFY_LOG_LEVEL': ('log_level', str),
    }

    _active: Optional[Dict[str, Any]] = None

    @classmethod
    def load_config(cls, config_path: Optional[str] = None) -> Dict[str, Any]:
        """Load configuration from file and environment, or use defaults"""
        config = cls.DEFAULT_CONFIG.copy()

        if config_path and Path(config_path).exists():
            try:
                with open(config_path, 'r') as f:
                    user_config = json.load(f)
                config.update(user_config)
            except Exception as e:
                logger.warning(f"Failed to load config from {config_path}: {e}")

        load_dotenv()
        for var, (key, cast) in cls.ENV_OVERRIDES.items():
            raw = os.getenv(var)
            if raw is None:
                continue
            try:
                config[key] = cast(raw)
            except ValueError:
                logger.warning(f"Ignoring {var}={raw!r}: not a valid {cast.__name__}")

        return config

    @classmethod
    def save_config(cls, config: Dict[str, Any], config_path: str) -> bool:
        """Save configuration to file"""
        try:
            with open(config_path, 'w') as f:
                json.dump(config, f, indent=2)
            return True
        except Exception as e:
            logger.error(f"Failed to save config to {config_path}: {e}")
            return False

    @classmethod
    def activate(cls, config: Dict[str, Any]):
        cls._active = dict(config)

    @classmethod
    def get(cls, key: str) -> Any:
        """Value from the active configuration, loading defaults on first use"""
        if cls._active is None:
            cls._active = cls.load_config()
        return cls._active.get(key, cls.DEFAULT_CONFIG.get(key))


def format_rational(value: Union[int, Rational]) -> str:
    """Exact rational as "p/q" in lowest terms ("p" when q = 1)"""
    r = Rational(value)
    if r.q == 1:
        return str(r.p)
    return f"{r.p}/{r.q}"


def parse_rational(text: str) -> Rational:
    """Inverse of format_rational"""
    try:
        if '/' in text:
            p, q = text.split('/', 1)
            if int(q) == 0:
                raise ZeroDivisionError(text)
            return Rational(int(p), int(q))
        return Integer(int(text))
    except (ValueError, ZeroDivisionError) as e:
        raise StructuralError(f"not an exact rational: {text!r}") from e


# Logging utilities
def setup_logging(level: str = 'INFO', log_file: Optional[str] = None):
    """Set up logging configuration"""
    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format=log_format,
        handlers=[
            logging.StreamHandler(),
            *([] if log_file is None else [logging.FileHandler(log_file)])
        ],
        force=True
    )


if __name__ == "__main__":
    config = ConfigManager.load_config()
    print("=== Active configuration ===")
    for key, value in config.items():
        print(f"{key}: {value}")
    print(format_rational(Rational(6, 4)))
