"""
tensor_core - dense rank-4 float64 tensors with reverse-mode differentiation.

Every activation in the fusion network is a FeatureMap of shape
(batch, channels, height, width). Operations executed while a
GradientTape is active are recorded and can be replayed backwards.
"""
