"""Toolkit for grounding spoken words in images at desk scale.

Provides frame/grid feature containers, matchmap attention with three
similarity heads, contrastive losses with analytic gradients, few-shot
pair mining, keyword detection and localisation, mutual-exclusivity
test batteries, a staged trainer over tiny two-branch encoders, and a
seeded synthetic dataset generator with on-disk manifest and tensor
formats.
"""

__version__ = "0.1.0"
