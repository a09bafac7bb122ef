"""Task generators, task bindings, metrics and dataset adapters."""

from .adapters import import_clevr, import_where2place
from .bundles import load_dataset, load_instance, make_task, save_instance, write_dataset
from .common import MalformedDataset, PackingFailed, Task
from .counting import CountingInstance, CountingMetrics, CountingTask, gen_counting, score_counting
from .jigsaw import JigsawInstance, JigsawMetrics, JigsawTask, NoSnap, Snapped, gen_jigsaw, score_jigsaw, snap
from .placement import (PlacementInstance, PlacementMetrics, PlacementTask, gen_placement, gen_placement_3d,
                        score_placement)
from .qa import QAInstance, QAMetrics, QATask, gen_multiobject_qa, score_qa
from .reference import REFERENCE, reference_row

__all__ = [
    "CountingInstance", "CountingMetrics", "CountingTask", "JigsawInstance", "JigsawMetrics", "JigsawTask",
    "MalformedDataset", "NoSnap", "PackingFailed", "PlacementInstance", "PlacementMetrics", "PlacementTask",
    "QAInstance", "QAMetrics", "QATask", "REFERENCE", "Snapped", "Task", "gen_counting", "gen_jigsaw",
    "gen_multiobject_qa", "gen_placement", "gen_placement_3d", "import_clevr", "import_where2place",
    "load_dataset", "load_instance", "make_task", "reference_row", "save_instance", "score_counting",
    "score_jigsaw", "score_placement", "score_qa", "snap", "write_dataset",
]
