"""Time and size conversions. Simulation time is integer nanoseconds."""
from typing import Union

NS_PER_US = 1000

Number = Union[int, float]


def us_to_ns(value_us: Number) -> int:
    """Convert microseconds to integer nanoseconds (rounded to nearest)."""
    return int(round(value_us * NS_PER_US))


def ns_to_us(value_ns: int) -> float:
    return value_ns / NS_PER_US


def tx_time_ns(wire_bytes: int, rate_bps: int) -> int:
    """Serialization time of `wire_bytes` on a `rate_bps` link, rounded up."""
    bits = wire_bytes * 8
    return -(-(bits * 1_000_000_000) // rate_bps)
