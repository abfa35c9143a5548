"""Toolkit for attention-derived motion fields on a bit-exact container
format: extraction, first-frame alignment, content-aware customization, and
a differentiable guidance objective."""

__version__ = "0.1.0"
