"""
eval 命令

对分类器检查点在验证集和测试集上做 eval 模式评估，写出 JSON 指标并打印同一个准确率数值
"""

import os

from app.classifier.evaluation import evaluate
from app.commands.base_command import BaseCommand, load_split, partition
from app.dal.artifacts import write_json
from app.dal.model_store import load_model
from app.dal.spectrogram_store import load_records
from app.utils.error_handler import ContractError
from app.utils.logger import get_logger

logger = get_logger(__name__)


class EvaluateCommand(BaseCommand):
    """评估分类器"""

    name = "eval"

    def execute(self) -> int:
        checkpoint = self.arg("checkpoint", os.path.join(self.work.classifier_dir, "baseline", "classifier.acgn"))
        model, container = load_model(self.require_file(checkpoint, "分类器检查点（请先运行 train-clf）"),
                                      "classifier")
        records = load_records(self.require_file(self.work.features, "特征文件（请先运行 featurize）"))
        split_doc = load_split(self)
        trained_on = container.metadata.get("test_hash")
        if trained_on is not None and trained_on != split_doc["test_hash"]:
            raise ContractError("检查点训练时的测试集指纹与当前 split.json 不一致")
        parts = partition(records, split_doc)

        classes = self.config.classes
        validation = evaluate(model, parts["validation"].spectrograms, parts["validation"].labels, classes)
        test = evaluate(model, parts["test"].spectrograms, parts["test"].labels, classes)
        out_dir = self.output_dir(os.path.dirname(os.path.abspath(checkpoint)))
        path = os.path.join(out_dir, "eval_metrics.json")
        write_json(self.metadata({
            "checkpoint": os.path.basename(checkpoint),
            "checkpoint_epoch": container.metadata.get("epoch"),
            "test_hash": split_doc["test_hash"],
            "validation": validation.to_dict(),
            "test": test.to_dict(),
        }), path)
        print(f"validation accuracy: {validation.accuracy!r}")
        print(f"test accuracy: {test.accuracy!r}")
        print(f"confusion matrix (test): {test.confusion}")
        return 0
