# ============================================
# PAYOFF SERVICE - Pagos de seguridad, confort y eficiencia
# ============================================
# Responsabilidad: términos de pago, mezcla Γ por etapa y pago total por paso.
# Todas las funciones aceptan escalares o arreglos (broadcasting de numpy).

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.models.payoff import PayoffBreakdown
from app.models.roundabout import Stage
from app.utils.exceptions import InvalidInputError

logger = logging.getLogger(__name__)

NV_SLOTS = (1, 2, 3)


@dataclass(frozen=True)
class EgoPrediction:
    """Predicción del ego en el horizonte: salidas (Np,4), controles (Np,2), errores de carril (Np,)"""
    outputs: np.ndarray
    controls: np.ndarray
    dy: np.ndarray
    dphi: np.ndarray


@dataclass(frozen=True)
class OpponentPrediction:
    """Salidas predichas (Np,4) de un oponente y su intención de incorporación"""
    outputs: np.ndarray
    alpha: int = 0


class PayoffService:
    """Servicio de evaluación de pagos"""

    @staticmethod
    def _pair_term(dv, ds, kv, ks, eps):
        # η = sgn(Δv) con sgn(0) = 0
        return kv * (dv ** 2 + eps) ** np.sign(dv) + ks * ds ** 2

    @staticmethod
    def gap(ego_xy, other_xy, Lv):
        """Δs = distancia euclidiana − Lv (arreglos (..., 2))"""
        d = np.asarray(other_xy) - np.asarray(ego_xy)
        return np.hypot(d[..., 0], d[..., 1]) - Lv

    @classmethod
    def safety_longitudinal(cls, ego, lv, w, Lv):
        """
        Seguridad longitudinal respecto al LV

        Args:
            ego, lv: VehicleState (lv None → valor neutro)
            w: PayoffWeights
            Lv: coeficiente de longitud (m)
        """
        if lv is None:
            return w.neutral_longitudinal
        dv = lv.vx - ego.vx
        ds = cls.gap(ego.position, lv.position, Lv)
        return float(cls._pair_term(dv, ds, w.kv_log, w.ks_log, w.epsilon))

    @classmethod
    def safety_lateral_pair(cls, ego, nv, w, Lv):
        """Seguridad lateral respecto a un NV (nv None → valor neutro)"""
        if nv is None:
            return w.neutral_lateral
        dv = ego.vx - nv.vx
        ds = cls.gap(ego.position, nv.position, Lv)
        return float(cls._pair_term(dv, ds, w.kv_lat, w.ks_lat, w.epsilon))

    @classmethod
    def longitudinal_array(cls, ego_out, lv_out, w, Lv):
        """Versión vectorizada sobre salidas [vx, φ, X, Y]"""
        dv = lv_out[..., 0] - ego_out[..., 0]
        ds = cls.gap(ego_out[..., 2:4], lv_out[..., 2:4], Lv)
        return cls._pair_term(dv, ds, w.kv_log, w.ks_log, w.epsilon)

    @classmethod
    def lateral_array(cls, ego_out, nv_out, w, Lv):
        dv = ego_out[..., 0] - nv_out[..., 0]
        ds = cls.gap(ego_out[..., 2:4], nv_out[..., 2:4], Lv)
        return cls._pair_term(dv, ds, w.kv_lat, w.ks_lat, w.epsilon)

    @staticmethod
    def safety_lanekeep(dy, dphi, w):
        """P_lk = ky/(dy²+ε) + kφ/(dφ²+ε)"""
        return w.ky_lk / (np.square(dy) + w.epsilon) + w.kphi_lk / (np.square(dphi) + w.epsilon)

    @staticmethod
    def comfort(ax, ay, w):
        """P_c = kax/(ax²+ε) + kay/(ay²+ε)"""
        return w.kax / (np.square(ax) + w.epsilon) + w.kay / (np.square(ay) + w.epsilon)

    @staticmethod
    def efficiency(vx, w):
        """P_e = ke/((vx − vx_max)²+ε)"""
        return w.ke_inner / (np.square(np.asarray(vx) - w.vx_max) + w.epsilon)

    @staticmethod
    def lateral_acceleration(vx, delta_f, params):
        """ay = vx²·tanβ/lr con tanβ = lr/(lf+lr)·tan δf"""
        return np.square(vx) * np.tan(delta_f) / params.wheelbase

    # --------------------------------------------
    # Mezcla por etapa
    # --------------------------------------------

    @staticmethod
    def keep_gate(stage, behavior):
        """Coeficiente de los términos de mantenimiento (1−α² o 1−β²)"""
        if Stage(stage) == Stage.ENTERING:
            return 1 - behavior.alpha ** 2
        return 1 - behavior.beta ** 2

    @staticmethod
    def entering_lateral_coefficients(alpha):
        """Pesos (NV1, NV2, NV3) de la mezcla lateral de entrada"""
        return (0.25 * (alpha + 1) ** 2, 1.0, 0.25 * (alpha - 1) ** 2)

    @classmethod
    def blend_weights(cls, stage, alpha, beta, nv2_alpha=0):
        """
        Coeficientes de Γ con broadcasting

        Returns:
            tuple: (keep, c1, c2, c3) tal que
            Γ = keep·(P_log + P_lk) + c1·L1 + c2·L2 + c3·L3
        """
        if Stage(stage) == Stage.ENTERING:
            a = np.asarray(alpha, dtype=float)
            gate = np.square(a)
            c1, c2, c3 = cls.entering_lateral_coefficients(a)
            return 1.0 - gate, gate * c1, gate * c2, gate * c3
        b2 = np.square(np.asarray(beta, dtype=float))
        a2 = np.square(np.asarray(nv2_alpha, dtype=float))
        return 1.0 - b2, b2, a2, np.zeros_like(b2)

    @classmethod
    def slot_coefficients(cls, stage, behavior, nv2_alpha=0):
        """
        Coeficiente efectivo de cada cupo NV dentro de Γ

        Returns:
            tuple: (c1, c2, c3)
        """
        _, c1, c2, c3 = cls.blend_weights(stage, behavior.alpha, behavior.beta, nv2_alpha)
        return float(c1), float(c2), float(c3)

    @classmethod
    def lateral_blend(cls, stage, behavior, p_lat_by_slot, nv2_alpha=0):
        """Valor de la mezcla lateral (sin la compuerta de entrada)"""
        if Stage(stage) == Stage.ENTERING:
            coefficients = cls.entering_lateral_coefficients(behavior.alpha)
        else:
            coefficients = (float(behavior.beta ** 2), float(nv2_alpha ** 2), 0.0)
        return sum(c * p_lat_by_slot[slot] for c, slot in zip(coefficients, NV_SLOTS))

    @classmethod
    def safety_blend(cls, stage, behavior, terms, opponent_behaviors=None, weights=None):
        """
        Γ según la etapa

        Args:
            stage: Stage
            behavior: Behavior del ego
            terms: {'p_log', 'p_lk', 'p_lat': {slot: valor o None}}
            opponent_behaviors: {slot: Behavior} (se usa el alpha del cupo 2)
            weights: PayoffWeights para la convención de oponente ausente

        Returns:
            float: Γ
        """
        stage = Stage(stage)
        behavior.validate_for(stage)
        neutral = weights.neutral_lateral if weights is not None else 0.0
        p_lat = {slot: (terms.get('p_lat', {}).get(slot)) for slot in NV_SLOTS}
        p_lat = {slot: (neutral if value is None else value) for slot, value in p_lat.items()}
        opponents = opponent_behaviors or {}
        nv2_alpha = opponents[2].alpha if 2 in opponents and opponents[2] is not None else 0

        keep = cls.keep_gate(stage, behavior) * (terms['p_log'] + terms['p_lk'])
        if stage == Stage.ENTERING:
            lateral = behavior.alpha ** 2 * cls.lateral_blend(stage, behavior, p_lat)
        else:
            lateral = cls.lateral_blend(stage, behavior, p_lat, nv2_alpha)
        return keep + lateral

    @staticmethod
    def weighted_total(style, p_s, p_c, p_e):
        return style.ks * p_s + style.kc * p_c + style.ke * p_e

    # --------------------------------------------
    # Pago por paso
    # --------------------------------------------

    @classmethod
    def components(cls, stage, alpha, beta, ego, leader, opponents, style, weights, params):
        """
        Términos del pago por paso con broadcasting sobre ejes de candidatos

        Args:
            stage: Stage del ego
            alpha, beta: comportamiento del ego, forma (...)
            ego: EgoPrediction con salidas (..., Np, 4), controles (..., Np, 2),
                dy y dphi (..., Np)
            leader: salidas (..., Np, 4) del LV o líder virtual, o None
            opponents: {slot: OpponentPrediction} con outputs (..., Np, 4) y
                alpha (...); cupos ausentes → valor neutro

        Returns:
            dict: p_log, p_lk, p_lat, p_s, p_c, p_e, total (arreglos (..., Np))
        """
        Lv = params.Lv
        if leader is None:
            p_log = weights.neutral_longitudinal
        else:
            p_log = cls.longitudinal_array(ego.outputs, leader, weights, Lv)
        p_lk = cls.safety_lanekeep(ego.dy, ego.dphi, weights)

        terms = []
        for slot in NV_SLOTS:
            opponent = opponents.get(slot)
            if opponent is None:
                terms.append(weights.neutral_lateral)
            else:
                terms.append(cls.lateral_array(ego.outputs, opponent.outputs, weights, Lv))

        a = np.asarray(alpha, dtype=float)[..., None]
        b = np.asarray(beta, dtype=float)[..., None]
        if Stage(stage) == Stage.ENTERING:
            coefficients = cls.entering_lateral_coefficients(a)
            keep, gate = 1.0 - np.square(a), np.square(a)
        else:
            nv2 = opponents.get(2)
            nv2_alpha = 0.0 if nv2 is None else np.asarray(nv2.alpha, dtype=float)[..., None]
            coefficients = (np.square(b), np.square(nv2_alpha), 0.0)
            keep, gate = 1.0 - np.square(b), 1.0
        p_lat = sum(c * term for c, term in zip(coefficients, terms))

        p_s = keep * (p_log + p_lk) + gate * p_lat
        ay = cls.lateral_acceleration(ego.outputs[..., 0], ego.controls[..., 1], params)
        p_c = cls.comfort(ego.controls[..., 0], ay, weights)
        p_e = cls.efficiency(ego.outputs[..., 0], weights)
        total = cls.weighted_total(style, p_s, p_c, p_e)
        return {'p_log': p_log, 'p_lk': p_lk, 'p_lat': p_lat, 'p_s': p_s,
                'p_c': p_c, 'p_e': p_e, 'total': total}

    @classmethod
    def payoff_tensor(cls, stage, alpha, beta, ego, leader, opponents, style, weights, params):
        """P por paso, forma (..., Np)"""
        return cls.components(stage, alpha, beta, ego, leader, opponents, style, weights,
                              params)['total']

    @classmethod
    def total_payoff(cls, stage, behavior, ego, leader, opponents, style, weights, params):
        """
        Desglose del pago en cada paso del horizonte

        Args:
            stage: Stage
            behavior: Behavior
            ego: EgoPrediction
            leader: (Np,4) del LV o líder virtual, o None
            opponents: {slot: OpponentPrediction o None}
            style: StyleWeights
            weights: PayoffWeights
            params: VehicleParameters del ego

        Returns:
            list[PayoffBreakdown]: uno por paso
        """
        stage = Stage(stage)
        behavior.validate_for(stage)
        Np = ego.outputs.shape[0]
        arrays = [ego.controls, ego.dy, ego.dphi]
        if leader is not None:
            arrays.append(leader)
        arrays.extend(o.outputs for o in opponents.values() if o is not None)
        if any(np.shape(a)[0] != Np for a in arrays):
            raise InvalidInputError('Las predicciones no comparten el horizonte', Np=Np)

        present = {slot: o for slot, o in opponents.items() if o is not None}
        terms = cls.components(stage, behavior.alpha, behavior.beta, ego, leader, present,
                               style, weights, params)
        terms = {k: np.broadcast_to(np.asarray(v, dtype=float), (Np,)) for k, v in terms.items()}
        return [PayoffBreakdown(
            p_s_log=float(terms['p_log'][p]), p_s_lat=float(terms['p_lat'][p]),
            p_s_lk=float(terms['p_lk'][p]), p_s=float(terms['p_s'][p]),
            p_c=float(terms['p_c'][p]), p_e=float(terms['p_e'][p]), total=float(terms['total'][p]),
        ) for p in range(Np)]
