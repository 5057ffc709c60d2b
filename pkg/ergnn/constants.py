PROTOCOL = {
    'K1': 10,
    'K2': 10,
    'mlp_layers': 2,
    'mlp_hidden': 64,
    'patience': 250,
    'max_epochs': 2000,
    'eta': 1.0,
    'xi': 1.0,
}

# Values a task overrides when the config file leaves them unset
PRESETS = {
    'filter_learning': {
        'lr': 0.01,
        'weight_decay': 0.0,
        'dropout_p': 0.0,
        'graph_source': 'grid',
    },
    'node_classification': {
        'lr': 0.01,
        'weight_decay': 5e-4,
        'dropout_p': 0.5,
        'graph_source': 'sbm',
    },
    'theorem_check': {
        'graph_source': 'grid',
    },
}

SPLIT_RATIOS = {
    'routine': (0.6, 0.2, 0.2),
    'heterophilic': (0.5, 0.25, 0.25),
}

FILTER_NAMES = ['low', 'high', 'band', 'reject', 'comb']

DEFAULT_SEEDS = [0, 1, 2, 3, 4]

TOLERANCES = {
    'symmetry': 1e-12,
    'spectrum': 1e-8,
    'spmm': 1e-12,
    'oracle': 1e-7,
    'interpolation': 1e-10,
    'recurrence': 1e-10,
    'gradient_rtol': 1e-4,
    'gradient_atol': 1e-8,
    'degenerate_denominator': 1e-6,
}

# Desk-scale acceptance for filter learning
FILTER_LEARNING_MAX_MSE = {
    'low': 1e-2,
    'high': 1e-2,
}
