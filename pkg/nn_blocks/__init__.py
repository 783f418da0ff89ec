"""
nn_blocks - trainable parameter storage and the building blocks of the
fusion network: convolutions, the depthwise-separable bottleneck used as
refiner/projection, spatial normalization, and text checkpoints.
"""
