"""FedAvg simulation across ICU clients.

A round distributes the global model, trains three local epochs per
client, and aggregates returned parameter vectors weighted by local
window counts. Local and Central settings reuse the same round loop with
a single (per-ICU or pooled) client, so a one-client federation is
bit-identical to local training by construction.

Client-side randomness derives solely from (seed, client index, round),
so runs are reproducible regardless of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .metrics import confusion, f1
from .schema import MAX_HORIZON


class FederationError(ValueError):
    pass


@dataclass
class ClientState:
    icu_id: str
    index: int  # stable client index used for seed derivation
    X_train: np.ndarray
    y_train: np.ndarray
    h_train: np.ndarray  # per-sample prediction horizon
    X_val: np.ndarray
    y_val: np.ndarray
    h_val: np.ndarray | None = None
    pos_weight: float = 1.0

    @property
    def n_k(self) -> int:
        """FedAvg weight: number of local training windows."""
        return int(self.y_train.shape[0])


@dataclass
class RoundLog:
    round: int  # 1-based
    client_losses: dict = field(default_factory=dict)
    val_f1: float = 0.0
    converged: bool = False

    def to_json_obj(self) -> dict:
        return {"round": self.round, "client_losses": self.client_losses,
                "val_f1": self.val_f1, "converged": self.converged}


def fedavg_aggregate(updates: list[tuple[np.ndarray, float]]) -> np.ndarray:
    """Coordinate-wise weighted average of parameter vectors.

    Weights are normalized first, so a single client's vector passes
    through bit-identically.
    """
    if not updates:
        raise FederationError("no client updates to aggregate")
    length = updates[0][0].shape
    total = 0.0
    for vec, weight in updates:
        if vec.shape != length:
            raise FederationError(
                f"parameter vector length mismatch: {vec.shape} vs {length}")
        if weight <= 0:
            raise FederationError(f"non-positive client weight {weight}")
        total += weight
    if total <= 0:
        raise FederationError("zero total weight")
    out = np.zeros(length, dtype=updates[0][0].dtype)
    for vec, weight in updates:
        out += (weight / total) * vec
    return out


def client_seed(seed: int, client_index: int, round_index: int) -> int:
    """Deterministic per-(client, round) seed; independent of run order."""
    return int(np.random.SeedSequence(
        [seed, client_index, round_index]).generate_state(1)[0])


def _eval_loss(model: nn.Model, X, y, pos_weight: float) -> float:
    probs = model.predict_proba(X)
    return nn.loss(probs, y, pos_weight=pos_weight)


def run_round(global_model: nn.Model, clients: list[ClientState],
              round_index: int, seed: int, local_epochs: int = 3,
              batch_size: int = 64, lr: float = nn.ADAM_LR
              ) -> tuple[nn.Model, RoundLog]:
    """One FedAvg round. Optimizer state is client-local and reset at the
    start of every round (only parameters are exchanged)."""
    if not clients:
        raise FederationError("round requires at least one client")
    log = RoundLog(round=round_index)
    params_updates = []
    buffer_updates = []
    for client in clients:
        local = global_model.copy()
        try:
            nn.train_epochs(
                local, client.X_train, client.y_train,
                epochs=local_epochs, batch_size=batch_size,
                seed=client_seed(seed, client.index, round_index),
                lr=lr, pos_weight=client.pos_weight)
        except nn.ModelError as exc:
            raise FederationError(
                f"client {client.icu_id} failed in round {round_index}: {exc}"
            ) from exc
        params_updates.append((local.to_vector(), client.n_k))
        buffer_updates.append((local.buffers_to_vector(), client.n_k))
        log.client_losses[client.icu_id] = _eval_loss(
            local, client.X_train, client.y_train, client.pos_weight)
    new_model = global_model.copy()
    new_model.from_vector(fedavg_aggregate(params_updates))
    new_model.buffers_from_vector(fedavg_aggregate(buffer_updates))
    return new_model, log


def validation_f1(model: nn.Model, clients: list[ClientState],
                  threshold: float = 0.5) -> float:
    X = np.concatenate([c.X_val for c in clients])
    y = np.concatenate([c.y_val for c in clients])
    if X.shape[0] == 0:
        return 0.0
    probs = model.predict_proba(X)
    return f1(confusion(probs, y, threshold))


def check_convergence(logs, patience: int, min_delta: float = 1e-4):
    """First (1-based) round whose validation F1 is never improved upon by
    more than min_delta for `patience` consecutive rounds; None otherwise."""
    if patience < 1:
        raise FederationError("patience must be >= 1")
    f1s = [log.val_f1 if isinstance(log, RoundLog) else float(log) for log in logs]
    best = -np.inf
    best_round = None
    streak = 0
    for round_index, value in enumerate(f1s, start=1):
        if value > best + min_delta:
            best = value
            best_round = round_index
            streak = 0
        else:
            streak += 1
            if streak >= patience:
                return best_round
    return None


def run_federated(clients: list[ClientState], model_config: nn.ModelConfig,
                  seed: int, rounds: int, local_epochs: int = 3,
                  batch_size: int = 64, lr: float = nn.ADAM_LR,
                  patience: int = 3, min_delta: float = 1e-4,
                  threshold: float = 0.5, early_stop: bool = True
                  ) -> tuple[nn.Model, list[RoundLog]]:
    """Full federated training loop with convergence-based early stop.

    With ``early_stop`` enabled the returned model is the snapshot from
    the last round whose validation F1 improved by more than
    ``min_delta`` (the round check_convergence reports), not the final
    round; with ``early_stop=False`` the final-round model is returned.
    """
    if not clients:
        raise FederationError("no clients")
    for c in clients:
        if c.n_k == 0:
            raise FederationError(f"client {c.icu_id} has an empty training split")
    model = nn.Model(model_config)
    logs: list[RoundLog] = []
    best_f1 = -np.inf
    snapshot = None
    for round_index in range(1, rounds + 1):
        model, log = run_round(model, clients, round_index, seed,
                               local_epochs=local_epochs,
                               batch_size=batch_size, lr=lr)
        log.val_f1 = validation_f1(model, clients, threshold)
        if early_stop and log.val_f1 > best_f1 + min_delta:
            best_f1 = log.val_f1
            snapshot = (model.to_vector(), model.buffers_to_vector())
        converged_at = check_convergence(logs + [log], patience, min_delta)
        log.converged = converged_at is not None
        logs.append(log)
        if early_stop and log.converged:
            break
    if snapshot is not None:
        model = model.copy()
        model.from_vector(snapshot[0])
        model.buffers_from_vector(snapshot[1])
    return model, logs


def pool_clients(clients: list[ClientState]) -> ClientState:
    """Merge clients into one pooled client (the Central setting).

    Data are concatenated in client order; a single-client pool is the
    client itself, making Central on one ICU coincide with Local.
    """
    if not clients:
        raise FederationError("no clients to pool")
    if len(clients) == 1:
        return clients[0]
    n_pos = sum(int(c.y_train.sum()) for c in clients)
    n_total = sum(c.n_k for c in clients)
    # keep weighted pos_weight consistent with how clients were built
    pw = clients[0].pos_weight
    pooled = ClientState(
        icu_id="CENTRAL",
        index=clients[0].index,
        X_train=np.concatenate([c.X_train for c in clients]),
        y_train=np.concatenate([c.y_train for c in clients]),
        h_train=np.concatenate([c.h_train for c in clients]),
        X_val=np.concatenate([c.X_val for c in clients]),
        y_val=np.concatenate([c.y_val for c in clients]),
        h_val=(np.concatenate([c.h_val for c in clients])
               if all(c.h_val is not None for c in clients) else None),
        pos_weight=pw if pw == 1.0 else (n_total - n_pos) / max(n_pos, 1),
    )
    return pooled


def run_experiment(setting: str, clients: list[ClientState],
                   model_config: nn.ModelConfig, seed: int, rounds: int = 50,
                   local_epochs: int = 3, batch_size: int = 64,
                   lr: float = nn.ADAM_LR, patience: int = 3,
                   min_delta: float = 1e-4, threshold: float = 0.5):
    """Train under one evaluation setting.

    Returns ({name: Model}, {name: [RoundLog]}): one model per ICU for
    Local, a single "federated" / "central" entry otherwise. Local and
    Central run the same round loop with a single client, so budgets
    (rounds x local_epochs) and early stopping are directly comparable.
    """
    kwargs = dict(seed=seed, rounds=rounds, local_epochs=local_epochs,
                  batch_size=batch_size, lr=lr, patience=patience,
                  min_delta=min_delta, threshold=threshold)
    if setting == "federated":
        model, logs = run_federated(clients, model_config, **kwargs)
        return {"federated": model}, {"federated": logs}
    if setting == "central":
        pooled = pool_clients(clients)
        model, logs = run_federated([pooled], model_config, **kwargs)
        return {"central": model}, {"central": logs}
    if setting == "local":
        models, logs = {}, {}
        for client in clients:
            model, log = run_federated([client], model_config, **kwargs)
            models[client.icu_id] = model
            logs[client.icu_id] = log
        return models, logs
    raise FederationError(f"unknown setting {setting!r}")


def convergence_rounds(logs: list[RoundLog], patience: int,
                       min_delta: float = 1e-4) -> int:
    """Rounds to convergence; the full budget if never converged."""
    converged = check_convergence(logs, patience, min_delta)
    return converged if converged is not None else len(logs)


def filter_client_horizon(client: ClientState, horizon: int) -> ClientState:
    if not (1 <= horizon <= MAX_HORIZON):
        raise FederationError(f"horizon {horizon} outside [1, {MAX_HORIZON}]")
    sel_tr = client.h_train == horizon
    if not sel_tr.any():
        raise FederationError(
            f"client {client.icu_id} has no training samples at horizon {horizon}")
    n_pos = int(client.y_train[sel_tr].sum())
    n_neg = int(sel_tr.sum()) - n_pos
    X_val, y_val, h_val = client.X_val, client.y_val, client.h_val
    if h_val is not None and (h_val == horizon).any():
        sel_val = h_val == horizon
        X_val, y_val, h_val = X_val[sel_val], y_val[sel_val], h_val[sel_val]
    return ClientState(
        icu_id=client.icu_id,
        index=client.index,
        X_train=client.X_train[sel_tr],
        y_train=client.y_train[sel_tr],
        h_train=client.h_train[sel_tr],
        X_val=X_val,
        y_val=y_val,
        h_val=h_val,
        pos_weight=(client.pos_weight if client.pos_weight == 1.0
                    else n_neg / max(n_pos, 1)),
    )


def run_fixed_window_suite(clients: list[ClientState], horizons: list[int],
                           model_config: nn.ModelConfig, seed: int, **kwargs):
    """One federated model per fixed horizon, trained on horizon-filtered
    samples. Returns ({horizon: Model}, {horizon: [RoundLog]})."""
    models, logs = {}, {}
    for horizon in horizons:
        filtered = [filter_client_horizon(c, horizon) for c in clients]
        model, log = run_federated(filtered, model_config, seed=seed, **kwargs)
        models[horizon] = model
        logs[horizon] = log
    return models, logs
