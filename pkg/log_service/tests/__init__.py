"""
Test package for log_service.
""" 