"""Published JSON schemas for bundle artifacts and API responses.

Every service response and every artifact file the pipeline writes
validates against one of these. The `validate` CLI subcommand and the test
suite both use them through :func:`check`.
"""

from __future__ import annotations

import jsonschema

_NEURON = {"type": "string", "pattern": "^.+:[0-9]+$"}
_NEURON_LIST = {"type": "array", "items": _NEURON}

LAYER_SCHEMA = {
    "type": "object",
    "required": ["id", "channels", "height", "width", "order_index"],
    "properties": {
        "id": {"type": "string", "minLength": 1},
        "channels": {"type": "integer", "minimum": 1},
        "height": {"type": "integer", "minimum": 1},
        "width": {"type": "integer", "minimum": 1},
        "order_index": {"type": "integer"},
    },
}

LAYERS_SCHEMA = {"type": "array", "items": LAYER_SCHEMA}

MANIFEST_SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["digest", "layers", "connections", "num_images", "classes"],
    "properties": {
        "digest": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "layers": LAYERS_SCHEMA,
        "connections": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["src_layer", "dst_layer"],
                "properties": {
                    "src_layer": {"type": "string"},
                    "dst_layer": {"type": "string"},
                },
            },
        },
        "num_images": {"type": "integer", "minimum": 1},
        "classes": {"type": "array", "items": {"type": "string", "minLength": 1}},
    },
}

TOPK_SCHEMA = {
    "type": "object",
    "required": ["k", "entries"],
    "properties": {
        "k": {"type": "integer", "minimum": 1},
        "entries": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["image_ids", "max_activations"],
                "properties": {
                    "image_ids": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                    "max_activations": {"type": "array", "items": {"type": "number"}},
                },
            },
        },
    },
}

CLUSTER_SCHEMA = {
    "type": "object",
    "required": ["cluster_id", "layer_id", "members"],
    "properties": {
        "cluster_id": {"type": "string", "minLength": 1},
        "layer_id": {"type": "string", "minLength": 1},
        "members": {"type": "array", "items": _NEURON, "minItems": 1},
    },
}

CLUSTERS_SCHEMA = {"type": "array", "items": CLUSTER_SCHEMA}

EMBEDDING_FILE_SCHEMA = {
    "type": "object",
    "required": ["config", "vectors", "layout2d", "neighbor_overlap_metric"],
    "properties": {
        "config": {
            "type": "object",
            "required": ["dim", "negatives", "epochs", "learning_rate", "seed"],
        },
        "vectors": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": {"type": "number"}},
        },
        "layout2d": {
            "type": "object",
            "additionalProperties": {
                "type": "array",
                "items": {"type": "number"},
                "minItems": 2,
                "maxItems": 2,
            },
        },
        "neighbor_overlap_metric": {"type": "number", "minimum": 0, "maximum": 1},
    },
}

EMBEDDING_VIEW_SCHEMA = {
    "type": "object",
    "required": ["filter", "neurons"],
    "properties": {
        "filter": {"type": "string"},
        "neurons": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["neuron", "x", "y", "cluster_id"],
                "properties": {
                    "neuron": _NEURON,
                    "x": {"type": "number"},
                    "y": {"type": "number"},
                    "cluster_id": {"type": "string"},
                },
            },
        },
    },
}

NEIGHBORS_SCHEMA = {
    "type": "object",
    "required": ["neuron", "neighbors"],
    "properties": {
        "neuron": _NEURON,
        "neighbors": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["neuron", "cosine"],
                "properties": {
                    "neuron": _NEURON,
                    "cosine": {"type": "number", "minimum": -1.0000001, "maximum": 1.0000001},
                },
            },
        },
    },
}

PATCHES_SCHEMA = {
    "type": "object",
    "required": ["neuron", "patches"],
    "properties": {
        "neuron": _NEURON,
        "patches": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["image_id", "bbox", "class_label"],
                "properties": {
                    "image_id": {"type": "integer", "minimum": 0},
                    "bbox": {
                        "type": "array",
                        "items": {"type": "integer", "minimum": 0},
                        "minItems": 4,
                        "maxItems": 4,
                    },
                    "class_label": {"type": "string"},
                    "source_path": {"type": ["string", "null"]},
                },
            },
        },
    },
}

GRAPH_SCHEMA = {
    "type": "object",
    "required": ["class", "nodes", "edges"],
    "properties": {
        "class": {"type": "string", "minLength": 1},
        "nodes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["node_id", "layer", "members", "importance"],
                "properties": {
                    "node_id": {"type": "string"},
                    "layer": {"type": "string"},
                    "members": {"type": "array", "items": _NEURON, "minItems": 1},
                    "importance": {"type": "number", "minimum": 0},
                },
            },
        },
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["src_node", "dst_node", "weight"],
                "properties": {
                    "src_node": {"type": "string"},
                    "dst_node": {"type": "string"},
                    "weight": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
    },
}

CASCADE_SCHEMA = {
    "type": "object",
    "required": ["seed_cluster", "layers"],
    "properties": {
        "seed_cluster": {"type": "string"},
        "layers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["layer", "triggered", "edges"],
                "properties": {
                    "layer": {"type": "string"},
                    "triggered": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["neuron", "score", "cluster_id", "in_class_summary"],
                            "properties": {
                                "neuron": _NEURON,
                                "score": {"type": "number"},
                                "cluster_id": {"type": "string"},
                                "in_class_summary": {"type": ["boolean", "null"]},
                            },
                        },
                    },
                    "edges": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["src", "dst", "strength"],
                            "properties": {
                                "src": _NEURON,
                                "dst": _NEURON,
                                "strength": {"type": "number"},
                            },
                        },
                    },
                },
            },
        },
    },
}

TASKS_SCHEMA = {
    "type": "object",
    "required": ["tasks"],
    "properties": {
        "tasks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["task_id", "mode", "source", "slots"],
                "properties": {
                    "task_id": {"type": "integer", "minimum": 0},
                    "mode": {"enum": ["cluster", "random"]},
                    "source": {"enum": ["generated", "curated", "random"]},
                    "slots": {
                        "type": "array",
                        "minItems": 6,
                        "maxItems": 6,
                        "items": {
                            "type": "object",
                            "required": ["neuron", "patches"],
                            "properties": {"neuron": _NEURON, "patches": {"type": "array"}},
                        },
                    },
                    "cluster_id": {"type": ["string", "null"]},
                    "member_slots": {
                        "type": ["array", "null"],
                        "items": {"type": "integer", "minimum": 0, "maximum": 5},
                    },
                    "intruder_slot": {"type": ["integer", "null"]},
                },
            },
        }
    },
}

JUDGMENTS_SCHEMA = {
    "type": "object",
    "required": ["judgments"],
    "properties": {
        "judgments": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["task_id", "respondent", "selected_slots"],
                "properties": {
                    "task_id": {"type": "integer", "minimum": 0},
                    "respondent": {"type": "string", "minLength": 1},
                    "selected_slots": {
                        "type": "array",
                        "items": {"type": "integer", "minimum": 0, "maximum": 5},
                    },
                    "label": {"type": ["string", "null"]},
                },
            },
        }
    },
}

METRICS_SCHEMA = {
    "type": "object",
    "required": ["fpr", "roc_points", "auc"],
    "properties": {
        "fpr": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        "roc_points": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {"type": "number", "minimum": 0, "maximum": 1},
                "minItems": 2,
                "maxItems": 2,
            },
        },
        "auc": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
    },
}

ERROR_SCHEMA = {
    "type": "object",
    "required": ["error", "detail"],
    "properties": {"error": {"type": "string"}, "detail": {"type": "string"}},
}


def check(payload, schema) -> None:
    """Raise jsonschema.ValidationError when payload does not match schema."""
    jsonschema.validate(payload, schema)
