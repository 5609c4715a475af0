"""
咳嗽音频 ACGAN 工具箱

预处理与分段咳嗽录音、提取梅尔谱、训练条件生成对抗网络合成谱图、扩充训练集并评估分类器
"""

__version__ = "1.0.0"
