"""
evaluation - mAP50 scoring and the module ablation protocol.
"""
