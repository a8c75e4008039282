"""Handles the creation, validation and update of the pipeline's settings."""

import json
import os
import tomllib
from pathlib import Path
from typing import Literal

import tomli_w

from fxlab.errors import ConfigError
from fxlab.lstm import OPTIMIZERS, OUTPUT_PEEPHOLES, TrainConfig
from fxlab.stattests import REGRESSION_KINDS
from fxlab.svr import SvrConfig, expand_grid

# Name of the settings file written next to a run's artifacts
FILENAME = "config.toml"

# Environment variable holding the seed of last resort
SEED_VARIABLE = "FXLAB_SEED"

# Settings structure. The order of sections and keys is the order of the file
SCHEMA = {
    "data": ["usa", "ind", "target", "train_fraction"],
    "models": ["selected"],
    "stationarity": ["policy", "max_order"],
    "tests": ["max_lag", "granger_lags", "regression", "dw_low", "dw_high"],
    "var": ["max_lag", "mode"],
    "svr": ["c", "gamma", "epsilon", "tolerance", "max_iter"],
    "svr_grid": ["c", "gamma", "epsilon", "folds", "jobs"],
    "lstm": [
        "hidden",
        "learning_rate",
        "epochs",
        "clip_norm",
        "patience",
        "optimizer",
        "output_peephole",
        "validation_fraction",
    ],
    "analysis": ["trees", "max_depth"],
    "output": ["dir", "seed"],
    "logging": ["debug"],
}

# Keys without a default
REQUIRED = {("data", "usa"), ("data", "ind")}

DEFAULTS = {
    "data": {"target": "forex", "train_fraction": 0.9},
    "models": {"selected": ["var", "svr", "lstm"]},
    "stationarity": {"policy": "auto-difference", "max_order": 1},
    "tests": {
        "max_lag": -1,
        "granger_lags": 3,
        "regression": "constant",
        "dw_low": 1.7,
        "dw_high": 2.3,
    },
    "var": {"max_lag": 6, "mode": "rolling"},
    "svr": {
        "c": 1000.0,
        "gamma": 0.001,
        "epsilon": 0.1,
        "tolerance": 1e-3,
        "max_iter": 200_000,
    },
    "svr_grid": {"c": [], "gamma": [], "epsilon": [], "folds": 3, "jobs": 1},
    "lstm": {
        "hidden": 16,
        "learning_rate": 0.05,
        "epochs": 500,
        "clip_norm": 5.0,
        "patience": 50,
        "optimizer": "gd",
        "output_peephole": "previous",
        "validation_fraction": 0.1,
    },
    "analysis": {"trees": 200, "max_depth": 6},
    "output": {"dir": "out", "seed": -1},
    "logging": {"debug": False},
}

# Written in place of the required data paths by `create_file`
TEMPLATE_PATHS = {"usa": "usa.csv", "ind": "ind.csv"}

MODELS = ["var", "svr", "lstm"]
STATIONARITY_POLICIES = ["auto-difference", "fail"]
VAR_MODES = ["rolling", "iterated"]

MAX_SEED = 2**63 - 1


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _int_at_least(key: str, value, minimum: int) -> int:
    if not _is_int(value) or value < minimum:
        raise ConfigError(f"`{key}` must be an integer of at least {minimum}.")
    return value


def _positive(key: str, value) -> float:
    if not _is_number(value) or not value > 0:
        raise ConfigError(f"`{key}` must be a positive number.")
    return float(value)


def _non_negative(key: str, value) -> float:
    if not _is_number(value) or not value >= 0:
        raise ConfigError(f"`{key}` cannot be negative.")
    return float(value)


def _fraction(key: str, value) -> float:
    if not _is_number(value) or not 0 < value < 1:
        raise ConfigError(f"`{key}` must be strictly between 0 and 1.")
    return float(value)


def _choice(key: str, value, choices) -> str:
    if value not in choices:
        raise ConfigError(f"`{key}` must be one of these: {', '.join(choices)}")
    return value


def _path(key: str, value) -> Path:
    if isinstance(value, str) and value:
        value = Path(value)
    if not isinstance(value, Path):
        raise ConfigError(f"`{key}` must be a path.")
    return value


def _positive_list(key: str, value) -> list[float]:
    if not isinstance(value, list) or not all(
        _is_number(item) and item > 0 for item in value
    ):
        raise ConfigError(f"`{key}` must be a list of positive numbers.")
    return [float(item) for item in value]


class Settings:
    def __init__(self) -> None:
        # Must match `SCHEMA`
        self._data_usa: Path
        self._data_ind: Path
        self._data_target: str
        self._data_train_fraction: float
        self._models_selected: list[str]
        self._stationarity_policy: Literal["auto-difference", "fail"]
        self._stationarity_max_order: int
        self._tests_max_lag: int
        self._tests_granger_lags: int
        self._tests_regression: str
        self._tests_dw_low: float
        self._tests_dw_high: float
        self._var_max_lag: int
        self._var_mode: Literal["rolling", "iterated"]
        self._svr_c: float
        self._svr_gamma: float
        self._svr_epsilon: float
        self._svr_tolerance: float
        self._svr_max_iter: int
        self._svr_grid_c: list[float]
        self._svr_grid_gamma: list[float]
        self._svr_grid_epsilon: list[float]
        self._svr_grid_folds: int
        self._svr_grid_jobs: int
        self._lstm_hidden: int
        self._lstm_learning_rate: float
        self._lstm_epochs: int
        self._lstm_clip_norm: float
        self._lstm_patience: int
        self._lstm_optimizer: str
        self._lstm_output_peephole: str
        self._lstm_validation_fraction: float
        self._analysis_trees: int
        self._analysis_max_depth: int
        self._output_dir: Path
        self._output_seed: int
        self._logging_debug: bool

    # [data]

    @property
    def data_usa(self) -> Path:
        return self._data_usa

    @data_usa.setter
    def data_usa(self, path: Path):
        self._data_usa = _path("data.usa", path)

    @property
    def data_ind(self) -> Path:
        return self._data_ind

    @data_ind.setter
    def data_ind(self, path: Path):
        self._data_ind = _path("data.ind", path)

    @property
    def data_target(self) -> str:
        return self._data_target

    @data_target.setter
    def data_target(self, name: str):
        if not isinstance(name, str) or not name or name == "date":
            raise ConfigError("`data.target` must name a value column.")
        self._data_target = name

    @property
    def data_train_fraction(self) -> float:
        return self._data_train_fraction

    @data_train_fraction.setter
    def data_train_fraction(self, value: float):
        self._data_train_fraction = _fraction("data.train_fraction", value)

    # [models]

    @property
    def models_selected(self) -> list[str]:
        return self._models_selected

    @models_selected.setter
    def models_selected(self, models: list[str]):
        if (
            not isinstance(models, list)
            or not models
            or any(model not in MODELS for model in models)
            or len(set(models)) != len(models)
        ):
            raise ConfigError(
                f"`models.selected` must list one or more of these: {', '.join(MODELS)}"
            )
        self._models_selected = list(models)

    # [stationarity]

    @property
    def stationarity_policy(self) -> Literal["auto-difference", "fail"]:
        return self._stationarity_policy

    @stationarity_policy.setter
    def stationarity_policy(self, policy: Literal["auto-difference", "fail"]):
        self._stationarity_policy = _choice(
            "stationarity.policy", policy, STATIONARITY_POLICIES
        )

    @property
    def stationarity_max_order(self) -> int:
        return self._stationarity_max_order

    @stationarity_max_order.setter
    def stationarity_max_order(self, value: int):
        if value not in (1, 2) or not _is_int(value):
            raise ConfigError("`stationarity.max_order` must be 1 or 2.")
        self._stationarity_max_order = value

    # [tests]

    @property
    def tests_max_lag(self) -> int:
        return self._tests_max_lag

    @tests_max_lag.setter
    def tests_max_lag(self, value: int):
        self._tests_max_lag = _int_at_least("tests.max_lag", value, -1)

    @property
    def tests_granger_lags(self) -> int:
        return self._tests_granger_lags

    @tests_granger_lags.setter
    def tests_granger_lags(self, value: int):
        self._tests_granger_lags = _int_at_least("tests.granger_lags", value, 1)

    @property
    def tests_regression(self) -> str:
        return self._tests_regression

    @tests_regression.setter
    def tests_regression(self, kind: str):
        self._tests_regression = _choice("tests.regression", kind, REGRESSION_KINDS)

    @property
    def tests_dw_low(self) -> float:
        return self._tests_dw_low

    @tests_dw_low.setter
    def tests_dw_low(self, value: float):
        if not _is_number(value) or not 0 <= value <= 2:
            raise ConfigError("`tests.dw_low` must be in [0, 2].")
        self._tests_dw_low = float(value)

    @property
    def tests_dw_high(self) -> float:
        return self._tests_dw_high

    @tests_dw_high.setter
    def tests_dw_high(self, value: float):
        if not _is_number(value) or not 2 <= value <= 4:
            raise ConfigError("`tests.dw_high` must be in [2, 4].")
        self._tests_dw_high = float(value)

    # [var]

    @property
    def var_max_lag(self) -> int:
        return self._var_max_lag

    @var_max_lag.setter
    def var_max_lag(self, value: int):
        self._var_max_lag = _int_at_least("var.max_lag", value, 1)

    @property
    def var_mode(self) -> Literal["rolling", "iterated"]:
        return self._var_mode

    @var_mode.setter
    def var_mode(self, mode: Literal["rolling", "iterated"]):
        self._var_mode = _choice("var.mode", mode, VAR_MODES)

    # [svr]

    @property
    def svr_c(self) -> float:
        return self._svr_c

    @svr_c.setter
    def svr_c(self, value: float):
        self._svr_c = _positive("svr.c", value)

    @property
    def svr_gamma(self) -> float:
        return self._svr_gamma

    @svr_gamma.setter
    def svr_gamma(self, value: float):
        self._svr_gamma = _positive("svr.gamma", value)

    @property
    def svr_epsilon(self) -> float:
        return self._svr_epsilon

    @svr_epsilon.setter
    def svr_epsilon(self, value: float):
        self._svr_epsilon = _non_negative("svr.epsilon", value)

    @property
    def svr_tolerance(self) -> float:
        return self._svr_tolerance

    @svr_tolerance.setter
    def svr_tolerance(self, value: float):
        self._svr_tolerance = _positive("svr.tolerance", value)

    @property
    def svr_max_iter(self) -> int:
        return self._svr_max_iter

    @svr_max_iter.setter
    def svr_max_iter(self, value: int):
        self._svr_max_iter = _int_at_least("svr.max_iter", value, 1)

    # [svr_grid]

    @property
    def svr_grid_c(self) -> list[float]:
        return self._svr_grid_c

    @svr_grid_c.setter
    def svr_grid_c(self, values: list[float]):
        self._svr_grid_c = _positive_list("svr_grid.c", values)

    @property
    def svr_grid_gamma(self) -> list[float]:
        return self._svr_grid_gamma

    @svr_grid_gamma.setter
    def svr_grid_gamma(self, values: list[float]):
        self._svr_grid_gamma = _positive_list("svr_grid.gamma", values)

    @property
    def svr_grid_epsilon(self) -> list[float]:
        return self._svr_grid_epsilon

    @svr_grid_epsilon.setter
    def svr_grid_epsilon(self, values: list[float]):
        if not isinstance(values, list) or not all(
            _is_number(item) and item >= 0 for item in values
        ):
            raise ConfigError("`svr_grid.epsilon` must be a list of non-negative numbers.")
        self._svr_grid_epsilon = [float(item) for item in values]

    @property
    def svr_grid_folds(self) -> int:
        return self._svr_grid_folds

    @svr_grid_folds.setter
    def svr_grid_folds(self, value: int):
        self._svr_grid_folds = _int_at_least("svr_grid.folds", value, 2)

    @property
    def svr_grid_jobs(self) -> int:
        return self._svr_grid_jobs

    @svr_grid_jobs.setter
    def svr_grid_jobs(self, value: int):
        # joblib reads -1 as "every core"
        if not _is_int(value) or value == 0 or value < -1:
            raise ConfigError("`svr_grid.jobs` must be a positive integer or -1.")
        self._svr_grid_jobs = value

    # [lstm]

    @property
    def lstm_hidden(self) -> int:
        return self._lstm_hidden

    @lstm_hidden.setter
    def lstm_hidden(self, value: int):
        self._lstm_hidden = _int_at_least("lstm.hidden", value, 1)

    @property
    def lstm_learning_rate(self) -> float:
        return self._lstm_learning_rate

    @lstm_learning_rate.setter
    def lstm_learning_rate(self, value: float):
        self._lstm_learning_rate = _non_negative("lstm.learning_rate", value)

    @property
    def lstm_epochs(self) -> int:
        return self._lstm_epochs

    @lstm_epochs.setter
    def lstm_epochs(self, value: int):
        # Zero is stored; training refuses it when the model is fitted
        self._lstm_epochs = _int_at_least("lstm.epochs", value, 0)

    @property
    def lstm_clip_norm(self) -> float:
        return self._lstm_clip_norm

    @lstm_clip_norm.setter
    def lstm_clip_norm(self, value: float):
        self._lstm_clip_norm = _positive("lstm.clip_norm", value)

    @property
    def lstm_patience(self) -> int:
        return self._lstm_patience

    @lstm_patience.setter
    def lstm_patience(self, value: int):
        self._lstm_patience = _int_at_least("lstm.patience", value, 1)

    @property
    def lstm_optimizer(self) -> str:
        return self._lstm_optimizer

    @lstm_optimizer.setter
    def lstm_optimizer(self, name: str):
        self._lstm_optimizer = _choice("lstm.optimizer", name, OPTIMIZERS)

    @property
    def lstm_output_peephole(self) -> str:
        return self._lstm_output_peephole

    @lstm_output_peephole.setter
    def lstm_output_peephole(self, value: str):
        self._lstm_output_peephole = _choice(
            "lstm.output_peephole", value, OUTPUT_PEEPHOLES
        )

    @property
    def lstm_validation_fraction(self) -> float:
        return self._lstm_validation_fraction

    @lstm_validation_fraction.setter
    def lstm_validation_fraction(self, value: float):
        self._lstm_validation_fraction = _fraction("lstm.validation_fraction", value)

    # [analysis]

    @property
    def analysis_trees(self) -> int:
        return self._analysis_trees

    @analysis_trees.setter
    def analysis_trees(self, value: int):
        self._analysis_trees = _int_at_least("analysis.trees", value, 1)

    @property
    def analysis_max_depth(self) -> int:
        return self._analysis_max_depth

    @analysis_max_depth.setter
    def analysis_max_depth(self, value: int):
        self._analysis_max_depth = _int_at_least("analysis.max_depth", value, 1)

    # [output]

    @property
    def output_dir(self) -> Path:
        return self._output_dir

    @output_dir.setter
    def output_dir(self, path: Path):
        self._output_dir = _path("output.dir", path)

    @property
    def output_seed(self) -> int:
        return self._output_seed

    @output_seed.setter
    def output_seed(self, value: int):
        if not _is_int(value) or not -1 <= value <= MAX_SEED:
            raise ConfigError("`output.seed` must be -1 (unset) or a 64-bit seed.")
        self._output_seed = value

    # [logging]

    @property
    def logging_debug(self) -> bool:
        return self._logging_debug

    @logging_debug.setter
    def logging_debug(self, value: bool):
        if not isinstance(value, bool):
            raise ConfigError("`logging.debug` must be either `true` or `false`")
        self._logging_debug = value

    # Model configurations

    def svr_config(self) -> SvrConfig:
        return SvrConfig(
            C=self.svr_c,
            gamma=self.svr_gamma,
            epsilon=self.svr_epsilon,
            tolerance=self.svr_tolerance,
            max_iter=self.svr_max_iter,
        )

    def svr_grid(self) -> list[SvrConfig]:
        """Grid search candidates; empty when no `[svr_grid]` list is set."""

        if not (self.svr_grid_c or self.svr_grid_gamma or self.svr_grid_epsilon):
            return []
        return expand_grid(
            self.svr_config(),
            self.svr_grid_c,
            self.svr_grid_gamma,
            self.svr_grid_epsilon,
        )

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.lstm_learning_rate,
            epochs=self.lstm_epochs,
            clip_norm=self.lstm_clip_norm,
            seed=seed,
            patience=self.lstm_patience,
            optimizer=self.lstm_optimizer,
            output_peephole=self.lstm_output_peephole,
            hidden_dim=self.lstm_hidden,
        )

    def dw_band(self) -> tuple[float, float]:
        return self.tests_dw_low, self.tests_dw_high

    def resolve_seed(self, override: int | None = None) -> int:
        """Seed from the command line, else the file, else `FXLAB_SEED`, else 0."""

        if override is not None:
            if not 0 <= override <= MAX_SEED:
                raise ConfigError("`--seed` must be a non-negative 64-bit integer.")
            return override
        if self.output_seed >= 0:
            return self.output_seed
        variable = os.environ.get(SEED_VARIABLE)
        if variable:
            try:
                seed = int(variable)
            except ValueError:
                raise ConfigError(f"`{SEED_VARIABLE}` must be an integer, not `{variable}`.")
            if not 0 <= seed <= MAX_SEED:
                raise ConfigError(f"`{SEED_VARIABLE}` must be a non-negative 64-bit integer.")
            return seed
        return 0

    # Files

    @staticmethod
    def create_file(path: Path) -> Path:
        """Writes a template settings file with every default. An existing file is
        never overwritten."""

        template = {
            section: {
                key: TEMPLATE_PATHS[key]
                if (section, key) in REQUIRED
                else DEFAULTS[section][key]
                for key in keys
            }
            for section, keys in SCHEMA.items()
        }
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        try:
            with open(path, "xb") as settings_file:
                tomli_w.dump(template, settings_file)
        except FileExistsError:
            raise ConfigError(f"`{path}` already exists.")
        return path

    @staticmethod
    def load_file(path: Path) -> dict:
        """Returns a dictionary with the settings loaded from a `TOML` or `JSON` file."""

        path = Path(path)
        try:
            if path.suffix == ".toml":
                with open(path, "rb") as settings_file:
                    return tomllib.load(settings_file)
            if path.suffix == ".json":
                with open(path, encoding="utf-8") as settings_file:
                    return json.load(settings_file)
        except FileNotFoundError:
            raise ConfigError(f"Settings file `{path}` does not exist.")
        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
            raise ConfigError(f"Settings file `{path}` could not be parsed: {e}")
        raise ConfigError(f"Settings file `{path}` must be `.toml` or `.json`.")

    @staticmethod
    def validate_schema(settings_dict: dict) -> None:
        """Rejects unknown sections and keys and missing required keys."""

        if not isinstance(settings_dict, dict):
            raise ConfigError("Settings must be a table of sections.")
        for section, values in settings_dict.items():
            if section not in SCHEMA:
                raise ConfigError(f"Unknown settings section `[{section}]`.")
            if not isinstance(values, dict):
                raise ConfigError(f"`[{section}]` must be a table.")
            for key in values:
                if key not in SCHEMA[section]:
                    raise ConfigError(f"Unknown setting `{section}.{key}`.")
        for section, key in REQUIRED:
            if key not in settings_dict.get(section, {}):
                raise ConfigError(f"Setting `{section}.{key}` is required.")

    @classmethod
    def from_dict(cls, settings_dict: dict, base_dir: Path | None = None):
        """Builds validated `Settings`; missing keys take their defaults and relative
        data and output paths resolve against `base_dir`."""

        cls.validate_schema(settings_dict)
        settings = cls()
        for section, keys in SCHEMA.items():
            values = settings_dict.get(section, {})
            for key in keys:
                value = values[key] if key in values else DEFAULTS[section][key]
                setattr(settings, f"{section}_{key}", value)

        if base_dir is not None:
            for key in ("data_usa", "data_ind", "output_dir"):
                path = getattr(settings, key)
                if not path.is_absolute():
                    setattr(settings, key, Path(base_dir) / path)
        return settings

    @classmethod
    def from_file(cls, path: Path):
        """Factory method to create a `Settings` instance from a settings file."""

        path = Path(path)
        return cls.from_dict(cls.load_file(path), base_dir=path.parent)

    def to_dict(self) -> dict:
        """Packs all `Settings` attributes into a `dict` that matches the schema."""

        settings_dict = {}
        for section, keys in SCHEMA.items():
            settings_dict[section] = {}
            for key in keys:
                attr_value = getattr(self, f"_{section}_{key}")
                # `Path` is not `TOML` serializable
                if isinstance(attr_value, Path):
                    attr_value = str(attr_value)
                settings_dict[section][key] = attr_value
        return settings_dict

    def update_file(self, path: Path) -> None:
        """Truncates the settings file at `path` with the values of this instance."""

        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as settings_file:
            tomli_w.dump(self.to_dict(), settings_file)
