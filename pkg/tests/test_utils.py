import pytest

from errors import InputError
from utils import (parse_float_list, parse_interval, validate_interval, validate_seed, validate_u_list,
                   validate_weights)


class TestParsers:
    def test_float_list(self):
        assert parse_float_list("6, 8,10 ,") == [6.0, 8.0, 10.0]
        assert parse_float_list("  ") == []
        with pytest.raises(InputError):
            parse_float_list("1, x")
        with pytest.raises(InputError):
            parse_float_list("1, inf")

    @pytest.mark.parametrize("text, expected", [
        ("0,1", (0.0, 1.0, False, False)),
        ("0.1, 0.9", (0.1, 0.9, True, True)),
        ("[0.001, 0.999]", (0.001, 0.999, True, True)),
        ("(0, 1]", (0.0, 1.0, False, True)),
        ("0, 0.5", (0.0, 0.5, False, True)),
    ])
    def test_interval_forms(self, text, expected):
        assert parse_interval(text) == expected

    @pytest.mark.parametrize("text", ["", "0.5", "0.6,0.2", "0,1.5", "[a,b]"])
    def test_bad_intervals(self, text):
        with pytest.raises(InputError):
            parse_interval(text)


class TestValidators:
    def test_u_list(self):
        assert validate_u_list("6,8,10") == (True, "", [6.0, 8.0, 10.0])
        assert not validate_u_list("8,6")[0]
        assert validate_u_list("8,6", increasing=False)[0]
        assert not validate_u_list("")[0]
        assert not validate_u_list("-1")[0]

    def test_weights(self):
        assert validate_weights(None) == (True, "", [])
        assert validate_weights("1, 0.5") == (True, "", [1.0, 0.5])
        assert not validate_weights("0.5, 0.2")[0]
        assert not validate_weights("1, 0.5, 0.7")[0]
        assert not validate_weights("1, 0")[0]
        assert validate_weights(" , ")[0] is False

    def test_interval(self):
        assert validate_interval(None) == (True, "", None)
        ok, _, parsed = validate_interval("[0.1, 0.9]")
        assert ok and parsed == (0.1, 0.9, True, True)
        ok, message, _ = validate_interval("0.9,0.1")
        assert not ok and "lo < hi" in message

    def test_seed(self):
        assert validate_seed(None, required=False) == (True, "", None)
        ok, message, _ = validate_seed(None, required=True)
        assert not ok and "--seed" in message
        assert validate_seed(7, required=True) == (True, "", 7)
        assert not validate_seed(-1, required=True)[0]
