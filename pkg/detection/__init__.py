"""
detection - synthetic RGB/IR scenes and a minimal detector built on the fused pyramid.
"""
