"""
数据模型模块
"""
from .composed import ComposedModel, GlobalRates
from .demonstration import DemonstrationSet, SubsystemData, Trajectory
from .gmm import GmmModel
from .interconnection import InterconnectionSpec, SubsystemSpec
from .report import CertificateReport, CheckResult
from .rollout import Rollout, Termination
from .sdp import AffineBlock, QuadraticObjective, SdpProblem, SdpSolution, SolverStatus, SymMat
from .subsystem import SubsystemModel, SubsystemRates
