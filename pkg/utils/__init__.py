"""
coughgan - Utils Package
"""
