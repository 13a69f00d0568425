import json
import os

import pytest
import numpy as np
import pandas as pd

from src.core.exceptions import CurveError, UsageError
from src.services.coarsen import binned_shift_curve
from src.services.data_service import (
    curve_to_frame,
    dist_envelope,
    read_curve_csv,
    split_report_paths,
    to_jsonable,
    write_curve_csv,
    write_dist_csv,
    write_json_report,
)
from src.services.dist import ShiftFamily, bernoulli, poisson
from src.services.neyman import bernoulli_pair, curve
from src.services.tofcurve import gaussian_curve, sup_distance


class TestCurveCSV:
    """Curve CSV writing and reading."""

    def test_frame_includes_breakpoints(self):
        """Tabulation keeps the exact breakpoints of a piecewise curve."""
        frame = curve_to_frame(curve(bernoulli_pair(0.2, 0.6)), step=0.1)
        assert list(frame.columns) == ["alpha", "beta"]
        row = frame[np.isclose(frame["alpha"], 0.2)]
        assert row["beta"].iloc[0] == pytest.approx(0.4)

    def test_read_back(self, temp_output_dir):
        """A written curve reads back as the same curve."""
        path = os.path.join(temp_output_dir, "curve.csv")
        f = curve(bernoulli_pair(0.2, 0.6))
        write_curve_csv(f, path)
        assert sup_distance(read_curve_csv(path), f) < 1e-12

    def test_metadata_comments(self, temp_output_dir):
        """Scalar metadata is kept as comment lines."""
        path = os.path.join(temp_output_dir, "binned.csv")
        text = write_curve_csv(binned_shift_curve(ShiftFamily("gaussian"), 1.0, 0.5), path)
        assert "# coarsened=true" in text.splitlines()
        metadata = read_curve_csv(path).metadata
        assert metadata["coarsened"] is True
        assert metadata["bin_width"] == 0.5
        assert metadata["family"] == "gaussian"

    def test_stdout_when_no_path(self, capsys):
        """Without a path the CSV goes to stdout."""
        write_curve_csv(gaussian_curve(1.0), step=0.5)
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "alpha,beta"

    def test_missing_file(self, temp_output_dir):
        """Unreadable files are usage errors."""
        with pytest.raises(UsageError):
            read_curve_csv(os.path.join(temp_output_dir, "nope.csv"))

    def test_missing_column(self, temp_output_dir):
        """Both alpha and beta columns are required."""
        path = os.path.join(temp_output_dir, "bad.csv")
        pd.DataFrame({"alpha": [0.0, 1.0]}).to_csv(path, index=False)
        with pytest.raises(UsageError, match="beta"):
            read_curve_csv(path)

    def test_bad_cell_line_number(self, temp_output_dir):
        """The line of a non-numeric cell counts comments and header."""
        path = os.path.join(temp_output_dir, "bad.csv")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("# a=1\n# b=2\nalpha,beta\n0,1\n0.5,x\n1,0\n")
        with pytest.raises(UsageError, match="line 5"):
            read_curve_csv(path)

    def test_not_a_tradeoff_curve(self, temp_output_dir):
        """Points above the diagonal fail the certificate."""
        path = os.path.join(temp_output_dir, "bad.csv")
        pd.DataFrame({"alpha": [0.0, 0.5, 1.0], "beta": [1.0, 0.7, 0.0]}).to_csv(path, index=False)
        with pytest.raises(CurveError):
            read_curve_csv(path)


class TestJSON:
    """JSON reports."""

    def test_special_floats(self):
        """inf becomes a string and NaN becomes null."""
        payload = to_jsonable({"a": np.float64(np.inf), "b": float("nan"), "c": -np.inf})
        assert payload == {"a": "inf", "b": None, "c": "-inf"}

    def test_numpy_and_frames(self):
        """Arrays, numpy scalars and frames become plain JSON values."""
        frame = pd.DataFrame({"x": [1, 2]})
        payload = to_jsonable(
            {"arr": np.array([1.0, 2.0]), "n": np.int64(3), "flag": np.bool_(True), "t": frame}
        )
        assert payload == {"arr": [1.0, 2.0], "n": 3, "flag": True, "t": [{"x": 1}, {"x": 2}]}

    def test_curve_description(self):
        """Curves serialize through their description."""
        payload = to_jsonable({"curve": gaussian_curve(1.0)})
        assert isinstance(payload["curve"], dict)
        json.dumps(payload)

    def test_report_file(self, temp_output_dir):
        """Reports are written as UTF-8 JSON."""
        path = os.path.join(temp_output_dir, "report.json")
        write_json_report({"gap": 1e-5}, path)
        with open(path, encoding="utf-8") as handle:
            assert json.load(handle) == {"gap": 1e-5}

    def test_unwritable_path(self, temp_output_dir):
        """Writing into a missing directory is a usage error."""
        with pytest.raises(UsageError):
            write_json_report({}, os.path.join(temp_output_dir, "missing", "report.json"))

    def test_split_report_paths(self):
        """The JSON report sits next to the CSV."""
        csv_path, json_path = split_report_paths("out/curve.csv")
        assert str(json_path).endswith("curve.json")
        assert split_report_paths(None) == (None, None)


class TestDistributionOutput:
    """Distribution CSV and envelope."""

    def test_dist_csv(self):
        """Atoms are written as value,mass rows."""
        text = write_dist_csv(bernoulli(0.3), os.devnull)
        assert text.splitlines()[0] == "value,mass"
        assert len(text.splitlines()) == 3

    def test_envelope(self):
        """The envelope reports atoms and the truncation deficit."""
        d = poisson(2.0)
        envelope = dist_envelope(d)
        assert envelope["atoms"] == d.size
        assert 0.0 < envelope["deficit"] < 1e-12
