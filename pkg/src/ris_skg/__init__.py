"""Physical-layer secret-key generation lab for RIS-dominated channels.

Simulates two-way probing over a reflective surface that fully carries the
Alice-Bob link, implements the classic feature schemes and the
man-in-the-middle reconstructions that break them, trains adversarial
common-feature generators, distills them into an explicit polynomial-sine
formula, and scores everything with closed-form secrecy analysis and
key-agreement metrics.
"""

__version__ = "0.1.0"
