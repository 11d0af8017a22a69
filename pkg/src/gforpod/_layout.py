"""Index layout of the packed parameter rows and state blocks.

Both kernel backends read device parameters from 2-D float arrays whose
columns follow these indices.  ``_ckernels.pyx`` hard-codes the same numbers;
``tests/test_kernels.py`` checks the two backends agree.
"""

# synchronous generator parameter row
SG_RA, SG_LL, SG_LAD, SG_LAQ = 0, 1, 2, 3
SG_RFD, SG_R1D, SG_R1Q, SG_R2Q = 4, 5, 6, 7
SG_H, SG_D = 8, 9
SG_RTR, SG_XTR = 10, 11
SG_KA, SG_TA, SG_TB, SG_TC, SG_EMIN, SG_EMAX, SG_VREF = 12, 13, 14, 15, 16, 17, 18
SG_R, SG_T3, SG_T4, SG_T5, SG_T6, SG_F1, SG_F2, SG_F3 = 19, 20, 21, 22, 23, 24, 25, 26
SG_PREF, SG_SRATIO, SG_EXC_ON, SG_GOV_ON = 27, 28, 29, 30
SG_DINV = 31  # 3x3 row-major, maps (psi_d, psi_fd, psi_1d) -> (-i_d, i_fd, i_1d)
SG_QINV = 40  # 3x3 row-major, maps (psi_q, psi_1q, psi_2q) -> (-i_q, i_1q, i_2q)
SG_VSUP, SG_PSUP = 49, 50
SG_NP = 51

SG_STATES = (
    "psi_d", "psi_q", "psi_fd", "psi_1d", "psi_1q", "psi_2q",
    "omega", "delta", "exc_leadlag", "efd",
    "gov_pgv", "turb_x1", "turb_x2", "turb_x3",
)
SG_NX = len(SG_STATES)
SG_OUTPUTS = ("freq_pu", "P_pu", "Q_pu", "i_d_pu", "i_q_pu", "vt_pu", "efd_pu", "pm_pu")
SG_NOUT = len(SG_OUTPUTS)

# grid-forming converter parameter row
GF_RC, GF_XC, GF_BC, GF_RCAP, GF_RTR, GF_XTR = 0, 1, 2, 3, 4, 5
GF_KPC, GF_KIC, GF_KPV, GF_KIV, GF_TFF = 6, 7, 8, 9, 10
GF_IQMAX, GF_IDMAX = 11, 12
GF_RF, GF_RV, GF_TP, GF_TQ = 13, 14, 15, 16
GF_PSTAR, GF_QSTAR, GF_VSTAR, GF_WSTAR = 17, 18, 19, 20
GF_SRATIO, GF_PODSIGN, GF_PSUP, GF_QSUP = 21, 22, 23, 24  # GF_PODSIGN: P channel
GF_PODP = 25  # K, T_W, T_f, T_S1, T_S2, limit
GF_PODQ = 31
GF_PODSIGN_Q = 37
GF_NP = 38
POD_K, POD_TW, POD_TF, POD_T1, POD_T2, POD_LIM = 0, 1, 2, 3, 4, 5

GF_STATES = (
    "is_q", "is_d", "uc_q", "uc_d", "ig_q", "ig_d",
    "cc_int_q", "cc_int_d", "vc_int_q", "vc_int_d",
    "ff_ig_q", "ff_ig_d", "ff_u_q", "ff_u_d",
    "p_filt", "q_filt", "theta",
)
GF_NX = len(GF_STATES)
GF_OUTPUTS = (
    "freq_pu", "P_pu", "Q_pu", "P_filt_pu", "Q_filt_pu",
    "pod_p_out_pu", "pod_q_out_pu", "iq_ref_pu", "id_ref_pu", "vpcc_pu",
)
GF_NOUT = len(GF_OUTPUTS)

# integer row of a converter: state offset, bus index, POD-P offset, POD-Q
# offset (-1 when disabled), POD-P and POD-Q lead/lag stage counts
GI_OFF, GI_BUS, GI_PODP_OFF, GI_PODQ_OFF, GI_PODP_NS, GI_PODQ_NS = 0, 1, 2, 3, 4, 5
GI_N = 6


def pod_state_names(n_stages: int) -> tuple[str, ...]:
    return ("washout", "lowpass") + tuple(f"leadlag{k + 1}" for k in range(n_stages))
