"""The batch stages of a forecasting run: hypothesis tests, model fits, evaluation
and the reports each stage leaves in the output directory."""

import logging
from functools import cached_property
from pathlib import Path

import numpy as np
import pandas as pd

from fxlab import analysis, lstm, metrics, stattests, svr, var
from fxlab.data import (
    Design,
    ScalingParams,
    SplitSpec,
    TimeSeriesFrame,
    build_panel,
    chronological_split,
    difference,
    difference_anchor,
    difference_frame,
    inverse_column,
    invert_difference,
    lagged_design,
    load_csv,
    minmax_fit,
    minmax_transform,
)
from fxlab.errors import InvalidParameter, MissingFile, NonStationarySeries
from fxlab.settings import FILENAME, MODELS, Settings
from fxlab.utils import hashes
from fxlab.utils.files import read_json, write_frame_csv, write_json

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def _records_frame(records: list[dict]) -> pd.DataFrame:
    return pd.DataFrame.from_records(records)


class Pipeline:
    """One configured run. Every derived dataset is computed once and shared by the
    stages that need it."""

    def __init__(self, settings: Settings, seed: int, out_dir: Path) -> None:
        self.settings = settings
        self.seed = seed
        self.out_dir = Path(out_dir)

    # Data

    @cached_property
    def panel(self) -> TimeSeriesFrame:
        """Target level first, then the USA minus IND deltas."""

        usa = load_csv(self.settings.data_usa)
        ind = load_csv(self.settings.data_ind, expected_columns=usa.names)
        panel = build_panel(usa, ind, self.settings.data_target)
        logger.info(
            f"Panel of {panel.n_rows} months ({panel.dates[0]}..{panel.dates[-1]}) "
            f"x {panel.n_cols} series."
        )
        return panel

    @cached_property
    def split(self) -> SplitSpec:
        # Raises on an empty partition before anything is fitted
        chronological_split(self.panel, self.settings.data_train_fraction)
        return SplitSpec.from_fraction(self.panel.n_rows, self.settings.data_train_fraction)

    @property
    def boundary(self) -> int:
        return self.split.boundary_index

    @cached_property
    def train_panel(self) -> TimeSeriesFrame:
        return self.panel.rows(0, self.boundary)

    @property
    def target(self) -> str:
        return self.settings.data_target

    @property
    def adf_max_lag(self) -> int | None:
        return None if self.settings.tests_max_lag < 0 else self.settings.tests_max_lag

    @cached_property
    def stationarity(self) -> stattests.StationarityReport:
        """Differencing orders decided on the training rows."""

        return stattests.stationarity_orders(
            self.train_panel,
            max_order=self.settings.stationarity_max_order,
            max_lag=self.adf_max_lag,
            regression_kind=self.settings.tests_regression,
        )

    @property
    def orders(self) -> dict[str, int]:
        """Differencing orders for modelling, enforcing the stationarity policy."""

        report = self.stationarity
        if report.failing and self.settings.stationarity_policy == "fail":
            raise NonStationarySeries(report.failing)
        return report.orders

    @cached_property
    def scaling(self) -> ScalingParams:
        return minmax_fit(self.panel, self.split)

    @cached_property
    def design(self) -> Design:
        """Scaled supervised layout shared by SVR, LSTM and feature importance."""
        return lagged_design(minmax_transform(self.panel, self.scaling), self.target)

    @property
    def train_samples(self) -> int:
        # Design row i predicts panel row i + 1
        return self.boundary - 1

    @property
    def test_dates(self) -> tuple[str, ...]:
        return self.panel.dates[self.boundary :]

    @property
    def test_actual(self) -> np.ndarray:
        return self.panel.column(self.target)[self.boundary :]

    # Tests

    def tests(self) -> dict[str, list[dict]]:
        """ADF on every series and its first difference, the Granger matrix on the
        differenced panel and Durbin-Watson on both forms of every series."""

        train = self.train_panel
        kind = self.settings.tests_regression
        band = self.settings.dw_band()

        adf_records, dw_records = [], []
        for name in train.names:
            series = train.column(name)
            changes = difference(series)
            # Levels are demeaned for Durbin-Watson, differences are taken as they are
            forms = (
                (name, series, series - series.mean()),
                (f"{name} (differenced)", changes, changes),
            )
            for label, values, dw_input in forms:
                adf_records.append(
                    stattests.adf_test(
                        values, max_lag=self.adf_max_lag, regression_kind=kind, name=label
                    ).to_record()
                )
                dw_records.append(
                    stattests.durbin_watson(dw_input, band=band, name=label).to_record()
                )

        stationary = difference_frame(train, self.stationarity.orders)
        granger = stattests.granger_matrix(stationary, self.settings.tests_granger_lags)
        granger_records = [result.to_record() for result in granger.values()]

        reports = {"adf": adf_records, "granger": granger_records, "dw": dw_records}
        for name, records in reports.items():
            write_json(self.out_dir / f"{name}.json", records)
            write_frame_csv(self.out_dir / f"{name}.csv", _records_frame(records))

        causal = sum(record["decision"] == "causal" for record in granger_records)
        logger.info(
            f"Tests written: {len(adf_records)} ADF, {len(granger_records)} Granger "
            f"({causal} causal), {len(dw_records)} Durbin-Watson."
        )
        return reports

    # Models

    def fit(self, model: str) -> dict:
        if model not in MODELS:
            raise InvalidParameter(f"Unknown model `{model}`; use one of {', '.join(MODELS)}.")
        return {"var": self.fit_var, "svr": self.fit_svr, "lstm": self.fit_lstm}[model]()

    def fit_var(self) -> dict:
        orders = self.orders
        stationary = difference_frame(self.train_panel, orders)
        aic = var.lag_aic_table(stationary, self.settings.var_max_lag)
        p = min(aic, key=lambda lag: (aic[lag], lag))
        model = var.fit_var(stationary, p)

        band = self.settings.dw_band()
        residual_dw = {
            name: stattests.durbin_watson(model.residuals[:, j], band=band, name=name).to_record()
            for j, name in enumerate(model.names)
        }
        document = {
            **model.to_dict(),
            "aic": {str(lag): value for lag, value in aic.items()},
            "orders": orders,
            "stable": model.is_stable(),
            "durbin_watson": residual_dw,
        }
        write_json(self.out_dir / "var.json", document)
        logger.info(f"VAR({p}) fitted on {stationary.n_rows} differenced months.")
        return document

    def fit_svr(self) -> dict:
        X = self.design.X[: self.train_samples]
        y = self.design.y[: self.train_samples]

        config = self.settings.svr_config()
        grid = self.settings.svr_grid()
        if grid:
            config, table = svr.grid_search(
                X,
                y,
                grid,
                folds=self.settings.svr_grid_folds,
                jobs=self.settings.svr_grid_jobs,
            )
            write_frame_csv(self.out_dir / "grid_cv.csv", table)

        model = svr.fit_svr(X, y, config)
        document = {
            **model.to_dict(),
            "feature_names": list(self.design.feature_names),
            "scaling": self.scaling.to_dict(),
        }
        write_json(self.out_dir / "svr.json", document)
        logger.info(
            f"SVR fitted with C={config.C}, gamma={config.gamma}, epsilon={config.epsilon}: "
            f"{model.dual_coefs.size} support vectors."
        )
        return document

    def fit_lstm(self) -> dict:
        config = self.settings.train_config(self.seed)
        X = self.design.X[: self.train_samples]
        y = self.design.y[: self.train_samples]
        samples = lstm.SupervisedSequence(X, y)

        validation = max(1, int(self.settings.lstm_validation_fraction * len(samples)))
        if validation >= len(samples):
            raise InvalidParameter(
                f"{len(samples)} training samples leave nothing to train on."
            )
        train_seq = samples.head(len(samples) - validation)
        validation_seq = samples.tail(validation)

        params = lstm.init_params(
            X.shape[1], config.hidden_dim, config.seed, config.output_peephole
        )
        params, history = lstm.train(params, train_seq, validation_seq, config)
        write_frame_csv(self.out_dir / "loss_history.csv", history)

        document = {
            **params.to_dict(),
            "feature_names": list(self.design.feature_names),
            "scaling": self.scaling.to_dict(),
            "epochs_run": len(history),
        }
        write_json(self.out_dir / "lstm.json", document)
        logger.info(
            f"LSTM trained for {len(history)} epochs; best validation loss "
            f"{history['val_loss'].min():.6g}."
        )
        return document

    # Evaluation

    def _load_model(self, model: str) -> dict:
        path = self.out_dir / f"{model}.json"
        if not path.is_file():
            raise MissingFile(path)
        return read_json(path)

    def predict_var(self, document: dict) -> np.ndarray:
        model = var.VarModel.from_dict(document)
        orders = {name: int(order) for name, order in document["orders"].items()}
        stationary = difference_frame(self.panel, orders)
        depth = max(orders.values())
        order = orders[self.target]
        levels = self.panel.column(self.target)
        test_rows = range(self.boundary, self.panel.n_rows)

        if self.settings.var_mode == "rolling":
            anchors = [difference_anchor(levels, order, t) for t in test_rows]
            return var.rolling_one_step(
                model,
                stationary,
                range(self.boundary - depth, self.panel.n_rows - depth),
                self.target,
                anchors,
            )

        start = self.boundary - depth
        history = stationary.values[start - model.p : start]
        forecasts = var.forecast_var(model, history, len(test_rows))
        changes = forecasts[:, stationary.index_of(self.target)]
        if order == 0:
            return changes
        return invert_difference(changes, levels[self.boundary - order : self.boundary])[order:]

    def predict_svr(self, document: dict) -> np.ndarray:
        model = svr.SvrModel.from_dict(document)
        scaled = svr.predict_many(model, self.design.X[self.train_samples :])
        return inverse_column(scaled, self.scaling, self.target)

    def predict_lstm(self, document: dict) -> np.ndarray:
        params = lstm.LstmParams.from_dict(document)
        # The state is carried through the training months into the test months
        scaled = lstm.predict(params, self.design.X)[self.train_samples :]
        return inverse_column(scaled, self.scaling, self.target)

    def features(self) -> dict:
        correlation = analysis.correlation_matrix(self.train_panel)
        importance = analysis.tree_importance(
            self.design.X[: self.train_samples],
            self.design.y[: self.train_samples],
            trees=self.settings.analysis_trees,
            max_depth=self.settings.analysis_max_depth,
            seed=self.seed,
            feature_names=self.design.feature_names,
        )
        write_frame_csv(self.out_dir / "correlation.csv", correlation.to_frame())
        write_frame_csv(self.out_dir / "importance.csv", importance.to_frame())
        document = {"correlation": correlation.to_dict(), "importance": importance.to_dict()}
        write_json(self.out_dir / "features.json", document)
        logger.info(f"Most important feature: `{importance.ranking()[0]}`.")
        return document

    def evaluate(self) -> dict:
        predictors = {
            "var": self.predict_var,
            "svr": self.predict_svr,
            "lstm": self.predict_lstm,
        }
        selected = self.settings.models_selected
        documents = {model: self._load_model(model) for model in selected}

        actual = self.test_actual
        predictions = {model: predictors[model](documents[model]) for model in selected}
        reports = {
            model: metrics.evaluate(predictions[model], actual) for model in selected
        }
        ranking = metrics.compare(reports)

        table = pd.DataFrame({"date": list(self.test_dates), "actual": actual})
        for model in selected:
            table[model] = predictions[model]
        write_frame_csv(self.out_dir / "predictions.csv", table)

        report = {
            "models": {model: reports[model].to_dict() for model in selected},
            "ranking": ranking,
            "best_model": ranking[0],
            "test": {
                "start": self.test_dates[0],
                "end": self.test_dates[-1],
                "n": len(self.test_dates),
            },
            "orders": self.stationarity.orders,
        }
        write_json(self.out_dir / "report.json", report)
        self.features()

        for model in ranking:
            logger.info(
                f"{model}: accuracy {reports[model].accuracy_pct:.2f}%, "
                f"RMSE {reports[model].rmse:.4f}"
            )
        return report

    def run(self) -> dict:
        self.tests()
        for model in self.settings.models_selected:
            self.fit(model)
        report = self.evaluate()

        resolved = Settings.from_dict(self.settings.to_dict())
        resolved.output_dir = self.out_dir
        resolved.output_seed = self.seed
        resolved.update_file(self.out_dir / FILENAME)
        write_json(self.out_dir / MANIFEST, hashes.manifest(self.out_dir))
        return report


def cmd_tests(settings: Settings, seed: int, out_dir: Path) -> dict:
    return Pipeline(settings, seed, out_dir).tests()


def cmd_fit(settings: Settings, model: str, seed: int, out_dir: Path) -> dict:
    return Pipeline(settings, seed, out_dir).fit(model)


def cmd_evaluate(settings: Settings, seed: int, out_dir: Path) -> dict:
    return Pipeline(settings, seed, out_dir).evaluate()


def run(settings: Settings, seed: int, out_dir: Path) -> dict:
    return Pipeline(settings, seed, out_dir).run()
