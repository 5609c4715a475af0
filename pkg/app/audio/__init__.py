"""
音频处理包

WAV读写、数据清单、预处理分段和特征提取
"""
