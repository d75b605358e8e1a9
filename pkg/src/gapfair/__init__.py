"""Train linear text classifiers, apply debiasing interventions, and audit group-wise TPR gaps."""

__version__ = "0.1.0"
