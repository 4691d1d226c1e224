"""telelab: a remote robotics teaching lab in one process.

Students drive a simulated rover + six-axis arm testbed over a framed
pub/sub protocol; every command crosses a safety-gated session gateway
that injects the latency profile of the chosen access stack.
"""

__version__ = "0.1.0"
