import json
import math

import pandas as pd
import pytest
from openpyxl import load_workbook

import config
from services.report_writer import ReportWriter
from services.storage_provider import LocalStorageProvider, get_storage_provider
from utils.errors import ConfigurationError


@pytest.fixture
def frame():
    return pd.DataFrame({"x": [0, 1], "prob": [0.1, 2.0 / 3.0]})


@pytest.fixture
def storage(tmp_path):
    return LocalStorageProvider(base_dir=str(tmp_path))


class TestRender:
    def test_csv_uses_round_trip_precision(self, frame):
        text = ReportWriter("csv").render(frame).decode("utf-8")
        lines = text.split("\n")
        assert lines[0] == "x,prob"
        assert lines[1] == "0,0.10000000000000001"
        assert float(lines[2].split(",")[1]) == 2.0 / 3.0
        assert text.endswith("\n")

    def test_empty_frame_is_header_only(self):
        text = ReportWriter("csv").render(pd.DataFrame(columns=["t", "value", "err"])).decode("utf-8")
        assert text == "t,value,err\n"

    def test_json_records(self, frame):
        payload = json.loads(ReportWriter("json").render(frame))
        assert payload == [{"x": 0, "prob": 0.1}, {"x": 1, "prob": 2.0 / 3.0}]

    def test_json_non_finite(self):
        records = [{"check": "oracle", "residual": math.inf, "params": {"p": "0.5"}}]
        payload = json.loads(ReportWriter("json").render_records(records))
        assert payload[0]["residual"] == "inf"
        assert payload[0]["params"] == {"p": "0.5"}

    def test_csv_records_flatten_nested(self):
        records = [{"check": "rates", "params": {"model": "push", "p": "0.6"}, "pass": True}]
        text = ReportWriter("csv").render_records(records).decode("utf-8")
        header, row = text.strip().split("\n")
        assert header.split(",") == ["check", "pass", "params"]
        assert row.endswith("model=push;p=0.6")

    def test_unknown_format(self):
        with pytest.raises(ConfigurationError):
            ReportWriter("parquet")


class TestWrite:
    def test_stdout(self, frame, capsys):
        result = ReportWriter("csv").write_frame(frame)
        assert result.destination == "stdout"
        assert result.rows == 2
        assert capsys.readouterr().out.startswith("x,prob\n")

    def test_file_overwrite_is_deterministic(self, frame, storage, tmp_path):
        writer = ReportWriter("csv", storage=storage)
        first = writer.write_frame(frame, "tabla.csv")
        content = (tmp_path / "tabla.csv").read_bytes()
        second = writer.write_frame(frame, "tabla.csv")
        assert first.destination == second.destination == str(tmp_path / "tabla.csv")
        assert (tmp_path / "tabla.csv").read_bytes() == content
        assert not (tmp_path / "tabla.csv.tmp").exists()

    def test_xlsx_requires_output(self, frame):
        with pytest.raises(ConfigurationError):
            ReportWriter("xlsx").write_frame(frame)

    def test_xlsx_file(self, frame, storage, tmp_path):
        ReportWriter("xlsx", storage=storage).write_frame(frame, "tabla.xlsx")
        workbook = load_workbook(tmp_path / "tabla.xlsx")
        sheet = workbook["Resultados"]
        assert [c.value for c in sheet[1]] == ["x", "prob"]
        assert sheet.max_row == 3


class TestStorageProvider:
    def test_bare_name_goes_to_base_dir(self, storage, tmp_path):
        assert storage.get_path("a.csv") == str(tmp_path / "a.csv")

    def test_explicit_path_is_kept(self, storage, tmp_path):
        target = tmp_path / "sub" / "b.json"
        path = storage.save(b"[]\n", str(target))
        assert path == str(target)
        assert target.read_bytes() == b"[]\n"

    def test_unknown_backend(self, monkeypatch):
        monkeypatch.setattr(config, "STORAGE_BACKEND", "s3")
        with pytest.raises(ConfigurationError):
            get_storage_provider()
