"""
工具函数模块

提供通用的工具函数和辅助方法
"""
