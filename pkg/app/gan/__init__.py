"""
ACGAN：条件生成器、双头判别器与对抗训练
"""
