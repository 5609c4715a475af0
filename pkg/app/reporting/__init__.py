"""
图像输出
"""
