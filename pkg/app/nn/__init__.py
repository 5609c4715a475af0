"""
张量与反向传播核心

float64 numpy 实现的网络层、损失函数、Adam 优化器和模型组合
"""
