"""scikit-learn style wrappers around the registration pipeline."""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin, clone
from sklearn.utils.validation import check_is_fitted

from . import featnet
from .cluster import ClusterConfig, spectral_cluster
from .consistency import ConsistencyConfig, spatial_consistency
from .estimate import MODES, PipelineConfig, RansacConfig, run_pipeline
from .evaluation import SuccessThresholds, score_scene
from .exceptions import MissingModel
from .prune import PruneConfig
from .trainer import LossConfig, train
from .validation import as_scene, check_binary_adjacency, check_correspondences, check_labeled


class FeatureExtractor(TransformerMixin, BaseEstimator):
    """Contrastively trained embedding of putative correspondences.

    ``fit`` takes labeled scenes (a list, or a callable ``i -> scene`` for an
    endless generated stream); ``transform`` maps an ``(N, 6)`` array to
    ``(N, feature_dim)`` unit-norm features.
    """

    def __init__(self, blocks=3, feature_dim=32, attention_dim=None, sigma_d=0.05, m_p=0.1,
                 m_n=1.4, lr=0.01, iterations=2000, batch_scenes=4, random_negatives=False,
                 random_state=0):
        self.blocks = blocks
        self.feature_dim = feature_dim
        self.attention_dim = attention_dim
        self.sigma_d = sigma_d
        self.m_p = m_p
        self.m_n = m_n
        self.lr = lr
        self.iterations = iterations
        self.batch_scenes = batch_scenes
        self.random_negatives = random_negatives
        self.random_state = random_state

    def _net_config(self):
        return featnet.NetConfig(self.blocks, self.feature_dim, self.attention_dim, self.random_state)

    def fit(self, X, y=None, callback=None):
        if callable(X):
            source = X
        else:
            scenes = check_labeled(X)
            source = lambda i: scenes[i % len(scenes)]  # noqa: E731
        loss_cfg = LossConfig(self.m_p, self.m_n, self.lr, self.iterations, self.batch_scenes,
                              self.random_negatives)
        self.net_config_ = self._net_config()
        result = train(loss_cfg, self.net_config_, source, self.random_state, self.sigma_d,
                       callback=callback)
        self.params_ = result.params
        self.training_log_ = result.log
        return self

    def transform(self, X, beta=None):
        check_is_fitted(self, "params_")
        corrs = check_correspondences(X)
        if beta is None:
            beta = spatial_consistency(corrs, self.sigma_d)
        return featnet.embed(self.params_, corrs, beta)

    def save(self, path):
        check_is_fitted(self, "params_")
        featnet.save_checkpoint(path, self.params_, self.net_config_, self.random_state)

    @classmethod
    def load(cls, path, sigma_d=0.05):
        try:
            params, cfg, seed = featnet.load_checkpoint(path)
        except FileNotFoundError as exc:
            raise MissingModel(str(exc)) from exc
        return cls.from_params(params, cfg, sigma_d=sigma_d, random_state=seed)

    @classmethod
    def from_params(cls, params, net_config, sigma_d=0.05, random_state=None):
        est = cls(blocks=net_config.blocks, feature_dim=net_config.feature_dim,
                  attention_dim=net_config.attention_dim, sigma_d=sigma_d,
                  random_state=net_config.init_seed if random_state is None else random_state)
        featnet.check_params(params, net_config)
        est.net_config_ = net_config
        est.params_ = params
        est.training_log_ = []
        return est


class EigengapSpectralClustering(ClusterMixin, BaseEstimator):
    """Spectral clustering of a binary graph; the cluster count comes from the eigengap.

    After ``fit``: ``labels_`` (``-1`` for nodes left unassigned),
    ``n_clusters_`` and ``eigenvalues_`` of the normalized Laplacian.
    """

    def __init__(self, k_max=20, min_cluster_size=3, random_state=0):
        self.k_max = k_max
        self.min_cluster_size = min_cluster_size
        self.random_state = random_state

    def fit(self, X, y=None):
        adj = check_binary_adjacency(X)
        res = spectral_cluster(adj, ClusterConfig(self.k_max, self.min_cluster_size), self.random_state)
        self.labels_ = res.assignment - 1
        self.n_clusters_ = res.m
        self.eigenvalues_ = res.eigenvalues
        return self


class PointCLM(BaseEstimator):
    """Multi-instance rigid registration from putative correspondences.

    ``mode`` picks the correspondence embedding: "deep" (trained network),
    "beta" (spatial consistency only, nothing to fit) or "oracle" (ground-truth
    instance labels; needs labeled scenes). ``predict`` returns one
    RigidTransform per detected instance; ``register`` returns the full
    RegistrationResult including the per-correspondence cluster assignment.
    """

    def __init__(self, mode="deep", sigma_d=0.05, tau_s=0.85, tau_n=10, k_max=20,
                 min_cluster_size=3, ransac_iterations=50, inlier_threshold=0.015, refit=True,
                 num_correspondences=1000, skip_pruning=False, feature_extractor=None,
                 random_state=0):
        self.mode = mode
        self.sigma_d = sigma_d
        self.tau_s = tau_s
        self.tau_n = tau_n
        self.k_max = k_max
        self.min_cluster_size = min_cluster_size
        self.ransac_iterations = ransac_iterations
        self.inlier_threshold = inlier_threshold
        self.refit = refit
        self.num_correspondences = num_correspondences
        self.skip_pruning = skip_pruning
        self.feature_extractor = feature_extractor
        self.random_state = random_state

    def pipeline_config(self):
        return PipelineConfig(
            consistency=ConsistencyConfig(self.sigma_d, self.tau_s),
            prune=PruneConfig(self.tau_n),
            cluster=ClusterConfig(self.k_max, self.min_cluster_size),
            ransac=RansacConfig(self.ransac_iterations, self.inlier_threshold, self.refit),
            num_correspondences=self.num_correspondences,
            skip_pruning=self.skip_pruning,
        )

    def fit(self, X, y=None):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "deep":
            fe = self.feature_extractor
            if fe is not None and hasattr(fe, "params_"):
                self.feature_extractor_ = fe
            else:
                fe = clone(fe) if fe is not None else FeatureExtractor(sigma_d=self.sigma_d,
                                                                        random_state=self.random_state)
                self.feature_extractor_ = fe.fit(X)
        self.is_fitted_ = True
        return self

    def _params(self):
        if self.mode != "deep":
            return None
        fe = getattr(self, "feature_extractor_", None)
        if fe is None and self.feature_extractor is not None and hasattr(self.feature_extractor, "params_"):
            fe = self.feature_extractor
        if fe is None:
            raise MissingModel("deep mode needs a fitted FeatureExtractor; call fit first")
        return fe.params_

    def register(self, X):
        return run_pipeline(as_scene(X), self.mode, self._params(), self.pipeline_config(),
                            self.random_state)

    def predict(self, X):
        return self.register(X).transforms

    def fit_predict(self, X, y=None):
        """Fit on labeled scenes, then return the predicted transforms for each of them."""
        self.fit(X)
        return [self.predict(s) for s in X]

    def score(self, X, y=None, thresholds=None):
        """Mean instance F1 over labeled scenes."""
        scenes = check_labeled(X if isinstance(X, (list, tuple)) else [X])
        th = thresholds or SuccessThresholds()
        f1 = [score_scene(self.predict(s), s.gt_transforms, th).f1 for s in scenes]
        return float(np.mean(f1))
