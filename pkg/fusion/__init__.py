"""
fusion - cross-modal gating for RGB/IR feature pyramids.

Symmetrical Cross-Gating (SCG) enhances each modality with gates derived
from the other at one pyramid level; Pyramidal Feature-aware Multimodal
Gating (PFMG) merges the two streams of a level under a spatial gate
computed from the preceding, finer level.
"""
