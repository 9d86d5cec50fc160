"""External linear limit state y = 3 - x_1 - x_2 (for protocol tests)."""
import sys

x = [float(v) for v in sys.stdin.readline().strip().split(",")]
print(repr(3.0 - x[0] - x[1]))
