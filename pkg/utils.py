"""
Utility functions for the CLI
Parsers and validators for command-line values, kept free of model imports
"""

import math
from typing import List, Optional, Tuple

from errors import InputError


def parse_float_list(values_str: str, name: str = "value") -> List[float]:
    """
    Parse a comma-separated list of floats.

    Args:
        values_str (str): Values like "6, 8, 10, 12"
        name (str): Name used in error messages

    Returns:
        list: Parsed floats in input order

    Raises:
        InputError: If an entry is not a finite number
    """
    if not values_str or not values_str.strip():
        return []

    values = []
    for item in values_str.split(','):
        item = item.strip()
        if not item:
            continue
        try:
            value = float(item)
        except ValueError:
            raise InputError(f"Invalid {name}: {item!r}")
        if not math.isfinite(value):
            raise InputError(f"Invalid {name}: {item!r} is not finite")
        values.append(value)

    return values


def parse_interval(interval_str: str) -> Tuple[float, float, bool, bool]:
    """
    Parse an interval like "0,1", "[0.001, 0.999]" or "(0, 1]".

    Brackets mark closed ends; bare "lo,hi" is open at 0 and 1 and closed elsewhere.

    Returns:
        tuple: (lo, hi, closed_lo, closed_hi)
    """
    text = (interval_str or "").strip()
    if not text:
        raise InputError("Empty interval")

    closed_lo = closed_hi = None
    if text[0] in "[(":
        closed_lo = text[0] == "["
        text = text[1:]
    if text and text[-1] in "])":
        closed_hi = text[-1] == "]"
        text = text[:-1]

    bounds = parse_float_list(text, "interval bound")
    if len(bounds) != 2:
        raise InputError(f"Interval needs two bounds, got {interval_str!r}")
    lo, hi = bounds
    if not 0.0 <= lo < hi <= 1.0:
        raise InputError(f"Interval must satisfy 0 <= lo < hi <= 1, got {interval_str!r}")

    if closed_lo is None:
        closed_lo = lo > 0.0
    if closed_hi is None:
        closed_hi = hi < 1.0
    return lo, hi, closed_lo, closed_hi


def validate_u_list(u_str: str, increasing: bool = True):
    """
    Validate a list of levels u.

    Returns:
        tuple: (is_valid, error_message, parsed_values)
    """
    try:
        values = parse_float_list(u_str, "u")
    except InputError as e:
        return False, str(e), []

    if not values:
        return False, "At least one u is required", []

    if any(u <= 0 for u in values):
        return False, f"Levels u must be positive, got {values}", []

    if increasing and any(b <= a for a, b in zip(values, values[1:])):
        return False, f"Levels u must be increasing, got {values}", []

    return True, "", values


def validate_weights(b_str: Optional[str]):
    """
    Validate a weight vector b: leading 1, positive, nonincreasing.

    Returns:
        tuple: (is_valid, error_message, parsed_weights)
    """
    if b_str is None or not b_str.strip():
        return True, "", []

    try:
        weights = parse_float_list(b_str, "weight")
    except InputError as e:
        return False, str(e), []

    if not weights:
        return False, f"No weights given in {b_str!r}", []

    if weights[0] != 1.0:
        return False, f"Leading weight must be 1, got {weights[0]:g}", []

    if any(w <= 0 for w in weights):
        return False, "Weights must be positive", []

    if any(b > a for a, b in zip(weights, weights[1:])):
        return False, f"Weights must be nonincreasing, got {weights}", []

    return True, "", weights


def validate_interval(interval_str: Optional[str]):
    """
    Returns:
        tuple: (is_valid, error_message, parsed_interval or None)
    """
    if interval_str is None or not interval_str.strip():
        return True, "", None

    try:
        return True, "", parse_interval(interval_str)
    except InputError as e:
        return False, str(e), None


def validate_seed(seed, required: bool):
    """
    Randomized commands need an explicit non-negative integer seed.

    Returns:
        tuple: (is_valid, error_message, seed)
    """
    if seed is None:
        if required:
            return False, "This command is randomized: pass --seed", None
        return True, "", None

    if int(seed) < 0:
        return False, f"Seed must be non-negative, got {seed}", None

    return True, "", int(seed)
