# ============================================
# KINEMATICS SERVICE - Modelo cinemático y predicción
# ============================================
# Responsabilidad: dinámica de bicicleta, jacobianos, discretización ZOH,
# estado aumentado, matrices levantadas y planta no lineal (RK4)

import logging

import numpy as np
from scipy.linalg import expm

from app.models.vehicle import (
    AugmentedState, ControlInput, HorizonConfig, PredictionMatrices, VehicleState
)
from app.utils.exceptions import InvalidInputError, SteeringDomainError
from app.utils.units import wrap_angle

logger = logging.getLogger(__name__)


def _finite_array(name, value, shape=None):
    array = np.asarray(value, dtype=float)
    if shape is not None and array.shape != shape:
        raise InvalidInputError(f'{name} con forma inválida', shape=array.shape, expected=shape)
    if not np.all(np.isfinite(array)):
        raise InvalidInputError(f'{name} contiene valores no finitos')
    return array


class KinematicsService:
    """Servicio del modelo cinemático de bicicleta"""

    # Margen antes de ±π/2 donde tan(δf) deja de ser utilizable
    STEERING_DOMAIN_MARGIN = 1e-6

    # Subpasos RK4 de la planta
    PLANT_SUBSTEPS = 4

    @classmethod
    def _check_steering(cls, delta_f):
        if abs(delta_f) >= np.pi / 2 - cls.STEERING_DOMAIN_MARGIN:
            raise SteeringDomainError('Ángulo de dirección fuera de dominio', delta_f=delta_f)

    @staticmethod
    def sideslip(delta_f, params):
        """β = atan(lr/(lf+lr)·tan δf)"""
        return np.arctan(params.lr / params.wheelbase * np.tan(delta_f))

    @classmethod
    def _rhs_array(cls, x, u, params):
        vx, phi = x[0], x[1]
        ax, delta_f = u
        cls._check_steering(delta_f)
        tan_beta = params.lr / params.wheelbase * np.tan(delta_f)
        beta = np.arctan(tan_beta)
        cos_beta = np.cos(beta)
        return np.array([
            ax,
            vx * tan_beta / params.lr,
            vx * np.cos(phi + beta) / cos_beta,
            vx * np.sin(phi + beta) / cos_beta,
        ])

    @classmethod
    def dynamics_rhs(cls, x, u, params):
        """
        Derivada del estado según el modelo cinemático

        Args:
            x: VehicleState
            u: ControlInput
            params: VehicleParameters

        Returns:
            np.ndarray: [v̇x, φ̇, Ẋ, Ẏ]
        """
        xa = _finite_array('estado', x.as_array())
        ua = _finite_array('control', u.as_array())
        return cls._rhs_array(xa, ua, params)

    @classmethod
    def _jacobians(cls, x, u, params):
        vx, phi = x[0], x[1]
        delta_f = u[1]
        cls._check_steering(delta_f)
        k = params.lr / params.wheelbase
        t = k * np.tan(delta_f)
        dt_ddelta = k * (1.0 + np.tan(delta_f) ** 2)
        c, s = np.cos(phi), np.sin(phi)

        # Ẋ = vx(cosφ − sinφ·tanβ), Ẏ = vx(sinφ + cosφ·tanβ)
        A = np.zeros((4, 4))
        A[1, 0] = t / params.lr
        A[2, 0] = c - s * t
        A[2, 1] = vx * (-s - c * t)
        A[3, 0] = s + c * t
        A[3, 1] = vx * (c - s * t)

        B = np.zeros((4, 2))
        B[0, 0] = 1.0
        B[1, 1] = vx / params.lr * dt_ddelta
        B[2, 1] = -vx * s * dt_ddelta
        B[3, 1] = vx * c * dt_ddelta
        return A, B

    @classmethod
    def linearize(cls, x, u, params):
        """
        Jacobianos analíticos (A_t, B_t) evaluados en (x, u)

        Returns:
            tuple: (A_t 4×4, B_t 4×2)
        """
        xa = _finite_array('estado', x.as_array())
        ua = _finite_array('control', u.as_array())
        return cls._jacobians(xa, ua, params)

    @classmethod
    def linearization_residual(cls, x, u, params):
        """c = f(x̄, ū) − A_t·x̄ − B_t·ū (término afín de la linealización)"""
        xa = _finite_array('estado', x.as_array())
        ua = _finite_array('control', u.as_array())
        A, B = cls._jacobians(xa, ua, params)
        return cls._rhs_array(xa, ua, params) - A @ xa - B @ ua

    @staticmethod
    def discretize(A_t, B_t, dt):
        """
        Retención de orden cero: A_k = e^{A_t·dt}, B_k = ∫ e^{A_t·τ} dτ · B_t

        Ambas salen de la exponencial del bloque [[A_t, B_t], [0, 0]]·dt.
        """
        A_t = _finite_array('A_t', A_t)
        B_t = _finite_array('B_t', B_t)
        if not np.isfinite(dt) or dt <= 0:
            raise InvalidInputError('dt debe ser positivo', dt=dt)
        n, m = B_t.shape
        block = np.zeros((n + m, n + m))
        block[:n, :n] = A_t
        block[:n, n:] = B_t
        phi = expm(block * dt)
        return phi[:n, :n], phi[:n, n:]

    @classmethod
    def discretize_drift(cls, A_t, c_t, dt):
        """g_k = ∫ e^{A_t·τ} dτ · c para un término constante c"""
        _, g = cls.discretize(A_t, np.asarray(c_t, dtype=float).reshape(-1, 1), dt)
        return g[:, 0]

    @staticmethod
    def augment(A_k, B_k):
        """
        Estado aumentado ξ = [x; u(k−1)]

        Returns:
            tuple: (A_hat 6×6, B_hat 6×2, C_hat 4×6)
        """
        A_k = _finite_array('A_k', A_k, (4, 4))
        B_k = _finite_array('B_k', B_k, (4, 2))
        A_hat = np.block([[A_k, B_k], [np.zeros((2, 4)), np.eye(2)]])
        B_hat = np.vstack([B_k, np.eye(2)])
        C_hat = np.hstack([np.eye(4), np.zeros((4, 2))])
        return A_hat, B_hat, C_hat

    @staticmethod
    def build_prediction(A_hat, B_hat, C_hat, horizon, A_k=None, B_k=None, drift=None):
        """
        Construye C̄, D̄ (y Ē si hay deriva) con matrices congeladas en el horizonte

        Args:
            A_hat, B_hat, C_hat: modelo aumentado
            horizon: HorizonConfig
            A_k, B_k: bloques discretos (por defecto se extraen de A_hat)
            drift: g_k (4,) opcional, respuesta discreta al residuo

        Returns:
            PredictionMatrices
        """
        if not isinstance(horizon, HorizonConfig):
            horizon = HorizonConfig(**horizon)
        Np, Nc = horizon.Np, horizon.Nc
        A_hat = np.asarray(A_hat, dtype=float)
        B_hat = np.asarray(B_hat, dtype=float)
        C_hat = np.asarray(C_hat, dtype=float)
        ny = C_hat.shape[0]
        nu = B_hat.shape[1]

        # powers[p] = A_hat^p
        powers = [np.eye(A_hat.shape[0])]
        for _ in range(Np):
            powers.append(powers[-1] @ A_hat)

        C_bar = np.vstack([C_hat @ powers[p] for p in range(1, Np + 1)])
        D_bar = np.zeros((ny * Np, nu * Nc))
        for p in range(1, Np + 1):
            for q in range(1, min(p, Nc) + 1):
                D_bar[(p - 1) * ny:p * ny, (q - 1) * nu:q * nu] = C_hat @ powers[p - q] @ B_hat

        E_bar = np.zeros(ny * Np)
        if drift is not None:
            g_hat = np.concatenate([np.asarray(drift, dtype=float), np.zeros(nu)])
            accumulated = np.zeros(A_hat.shape[0])
            for p in range(1, Np + 1):
                accumulated = accumulated + powers[p - 1] @ g_hat
                E_bar[(p - 1) * ny:p * ny] = C_hat @ accumulated

        return PredictionMatrices(
            A_k=A_hat[:4, :4].copy() if A_k is None else np.asarray(A_k, dtype=float),
            B_k=A_hat[:4, 4:].copy() if B_k is None else np.asarray(B_k, dtype=float),
            A_hat=A_hat, B_hat=B_hat, C_hat=C_hat,
            C_bar=C_bar, D_bar=D_bar, horizon=horizon, E_bar=E_bar,
        )

    @classmethod
    def prediction_for(cls, state, prev_control, params, horizon):
        """
        Linealiza en (x, u(k−1)), discretiza y levanta el modelo de la época
        (incluye el residuo afín de la linealización)
        """
        A_t, B_t = cls.linearize(state, prev_control, params)
        c_t = cls.linearization_residual(state, prev_control, params)
        A_k, B_k = cls.discretize(A_t, B_t, horizon.dt)
        g_k = cls.discretize_drift(A_t, c_t, horizon.dt)
        A_hat, B_hat, C_hat = cls.augment(A_k, B_k)
        return cls.build_prediction(A_hat, B_hat, C_hat, horizon, A_k=A_k, B_k=B_k, drift=g_k)

    @staticmethod
    def predict_outputs(xi0, du_matrix, mats):
        """
        Predicción por lotes para K secuencias de incrementos

        Args:
            xi0: ξ (6,)
            du_matrix: (K, 2·Nc) con [Δax_1, Δδ_1, Δax_2, ...]
            mats: PredictionMatrices

        Returns:
            np.ndarray: (K, Np, 4)
        """
        xi0 = _finite_array('ξ', xi0, (6,))
        du_matrix = np.atleast_2d(np.asarray(du_matrix, dtype=float))
        Np, Nc = mats.horizon.Np, mats.horizon.Nc
        if du_matrix.shape[1] != 2 * Nc:
            raise InvalidInputError('Longitud de la secuencia Δu distinta de Nc',
                                    got=du_matrix.shape[1] // 2, Nc=Nc)
        outputs = mats.C_bar @ xi0 + mats.E_bar + du_matrix @ mats.D_bar.T
        return outputs.reshape(-1, Np, 4)

    @staticmethod
    def hold_at_standstill(outputs, xi0):
        """
        Detiene las salidas predichas desde el primer paso con vx < 0

        Desde ese paso vx = 0 y la pose queda en la del paso anterior (o la
        actual si ocurre en el primero), igual que la planta sin marcha atrás.

        Args:
            outputs: (K, Np, 4)
            xi0: ξ (6,) del instante actual

        Returns:
            np.ndarray: copia (K, Np, 4)
        """
        outputs = np.array(outputs, dtype=float)
        stopped = np.maximum.accumulate(outputs[:, :, 0] < 0.0, axis=1)
        if not stopped.any():
            return outputs
        K = outputs.shape[0]
        start = np.broadcast_to(np.asarray(xi0, dtype=float)[1:4], (K, 1, 3))
        previous = np.concatenate([start, outputs[:, :-1, 1:4]], axis=1)
        hold = previous[np.arange(K), np.argmax(stopped, axis=1)]
        outputs[:, :, 0] = np.where(stopped, 0.0, outputs[:, :, 0])
        outputs[:, :, 1:4] = np.where(stopped[:, :, None], hold[:, None, :], outputs[:, :, 1:4])
        return outputs

    @classmethod
    def predict_trajectory(cls, xi0, du_seq, mats):
        """
        Predicción de Np salidas para una secuencia de Nc incrementos

        Args:
            xi0: AugmentedState o arreglo (6,)
            du_seq: secuencia de ControlDelta (longitud Nc)
            mats: PredictionMatrices

        Returns:
            list[VehicleState]: Np estados predichos (vx acotada en 0)
        """
        du_seq = list(du_seq)
        if len(du_seq) != mats.horizon.Nc:
            raise InvalidInputError('Longitud de la secuencia Δu distinta de Nc',
                                    got=len(du_seq), Nc=mats.horizon.Nc)
        xi = xi0.xi if isinstance(xi0, AugmentedState) else xi0
        flat = np.concatenate([d.as_array() for d in du_seq])
        outputs = cls.predict_outputs(xi, flat[None, :], mats)[0]
        return [VehicleState.from_array(row, clamp_speed=True) for row in outputs]

    @classmethod
    def _plant_rhs(cls, x, u, params):
        # Sin marcha atrás: con vx <= 0 el frenado no mueve el vehículo
        vx = max(x[0], 0.0)
        ax = u[0] if (x[0] > 0.0 or u[0] > 0.0) else 0.0
        return cls._rhs_array(np.array([vx, x[1], x[2], x[3]]), (ax, u[1]), params)

    @classmethod
    def integrate_plant(cls, x, u, params, dt, substeps=None):
        """
        Avanza el modelo no lineal un paso con RK4 de paso fijo

        Args:
            x: VehicleState
            u: ControlInput
            params: VehicleParameters
            dt: periodo (s)
            substeps: subpasos RK4 (por defecto 4)

        Returns:
            VehicleState: yaw normalizado, vx >= 0
        """
        if not np.isfinite(dt) or dt <= 0:
            raise InvalidInputError('dt debe ser positivo', dt=dt)
        n = substeps or cls.PLANT_SUBSTEPS
        h = dt / n
        state = _finite_array('estado', x.as_array())
        control = _finite_array('control', u.as_array())
        for _ in range(n):
            k1 = cls._plant_rhs(state, control, params)
            k2 = cls._plant_rhs(state + 0.5 * h * k1, control, params)
            k3 = cls._plant_rhs(state + 0.5 * h * k2, control, params)
            k4 = cls._plant_rhs(state + h * k3, control, params)
            state = state + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        state[0] = max(state[0], 0.0)
        state[1] = wrap_angle(state[1])
        return VehicleState.from_array(state)
