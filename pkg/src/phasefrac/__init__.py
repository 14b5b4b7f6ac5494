"""Phase-field fracture material-point data and physics-structured surrogates."""

__version__ = "0.1.0"
