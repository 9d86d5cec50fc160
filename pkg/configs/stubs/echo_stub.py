"""Protocol smoke-test simulator: reads one line of inputs, always answers 0."""
import sys

line = sys.stdin.readline()
values = [float(v) for v in line.strip().split(",")]
print(0.0)
