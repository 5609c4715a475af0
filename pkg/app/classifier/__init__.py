"""
基线CNN分类器：训练、评估与合成样本扩充
"""
