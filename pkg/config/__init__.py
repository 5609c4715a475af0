"""
coughgan - Config Package
"""
