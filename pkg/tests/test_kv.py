"""
Tests for the key-value text codec.
"""

from __future__ import annotations

import pytest

from hogscan import kv
from hogscan.errors import ConfigError


class TestParseKeyValues:
    def test_basic(self):
        text = "# run\ncell_size = 8\n\n  gamma=off  \n"
        assert kv.parse_key_values(text) == {"cell_size": "8", "gamma": "off"}

    def test_keeps_order(self):
        assert list(kv.parse_key_values("b = 1\na = 2\n")) == ["b", "a"]

    def test_value_may_contain_equals(self):
        assert kv.parse_key_values("note = a=b")["note"] == "a=b"

    def test_missing_equals_names_line(self):
        with pytest.raises(ConfigError, match="run.cfg:2"):
            kv.parse_key_values("a = 1\njust words\n", "run.cfg")

    def test_empty_key(self):
        with pytest.raises(ConfigError):
            kv.parse_key_values(" = 3")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            kv.parse_key_values("a = 1\na = 2\n")

    def test_format_round_trip(self):
        pairs = [("window_width", "64"), ("gamma", "0.5")]
        text = kv.format_key_values(pairs)
        assert text == "window_width = 64\ngamma = 0.5\n"
        assert list(kv.parse_key_values(text).items()) == pairs


class TestNumbers:
    @pytest.mark.parametrize("value", [0.1, 1.05, 1e-300, -2.5, 1 / 3])
    def test_float_text_round_trips(self, value):
        assert float(kv.format_float(value)) == value
        assert float(kv.format_exact(value)) == value

    def test_parse_int_names_key(self):
        with pytest.raises(ConfigError, match="cell_size"):
            kv.parse_int("cell_size", "8.5")

    def test_parse_float_names_key(self):
        with pytest.raises(ConfigError, match="tau"):
            kv.parse_float("tau", "high")

    @pytest.mark.parametrize("text", ["off", "None", "DISABLED"])
    def test_optional_float_disabled(self, text):
        assert kv.parse_optional_float("gamma", text) is None

    def test_optional_float_value(self):
        assert kv.parse_optional_float("gamma", "0.5") == 0.5


class TestBool:
    @pytest.mark.parametrize(
        "text, expected", [("1", True), ("Yes", True), ("on", True), ("0", False), ("false", False)]
    )
    def test_values(self, text, expected):
        assert kv.parse_bool("nms_enabled", text) is expected

    def test_invalid(self):
        with pytest.raises(ConfigError, match="nms_enabled"):
            kv.parse_bool("nms_enabled", "maybe")
