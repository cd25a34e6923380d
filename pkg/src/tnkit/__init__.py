"""Loop-free tensor-network toolkit.

Dense and Abelian-symmetric tensor algebra, gauged tree tensor networks,
tensor-product operators and a variational ground-state solver, with
reference binary-tree models (transverse-field Ising, Bose-Hubbard ring)
behind the ``tnkit`` command line.
"""

from .groups import AbelianGroup, AngleGroup, ProductGroup, TRIVIAL, U1, U1Group, Z2, ZGroup
from .links import (
    IN,
    OUT,
    Collision,
    FuseNode,
    SymmetricLink,
    adjusted,
    build_fuse_node,
    fused_support,
    intersect_links,
    pad_links,
)
from .dense import (
    DenseTensor,
    SingularSpectrum,
    contract,
    contract_diagonal,
    expm_pair,
    fuse,
    norm,
    offset,
    partial_trace,
    permute,
    qr,
    random_dense,
    split,
    subtensor_assign,
    subtensor_read,
    svd,
)
from .symmetric import (
    SectorSpectra,
    SymmetricTensor,
    contract_symmetric,
    downgrade,
    expm_symmetric,
    fuse_index_map,
    fuse_symmetric,
    link_index_table,
    permute_symmetric,
    possible_matches,
    qr_symmetric,
    scale_axis,
    split_symmetric,
    svd_symmetric,
    sym_subtensor_assign,
    sym_subtensor_read,
)
from .network import (
    AMPLITUDES_CAP,
    GaugeState,
    LinkInfo,
    LoopFreeNetwork,
    SELECTOR_LINK,
    TreeGeometry,
    absorb_factor,
    contract_to_amplitudes,
    correlate,
    expect_local,
    install_canonical_gauge,
    install_unitary_gauge,
    make_binary_tree,
    move_center,
    product_state_network,
    qr_toward,
    svd_toward,
    random_symmetric_ansatz,
    scalar_product,
    schmidt_truncate,
    support_at,
)
from .operators import (
    IDENTITY,
    MATERIALIZE_CAP,
    EffectiveHamiltonian,
    ProjectorTerm,
    RenormalizedOperator,
    SiteOperator,
    TPO,
    TPO_CUT_BUDGET,
    TPO_LEG_BUDGET,
    TPOTerm,
    apply_effective,
    apply_effective_over,
    build_all_renormalized,
    check_compatibility,
    describe_tpo,
    effective_energy,
    effective_hamiltonian,
    effective_matrix,
    match_layout,
    pack_tensor,
    refresh_link,
    renormalize_projector,
    renormalize_step,
    unpack_tensor,
    update_path,
)
from .serialize import (
    load_network,
    pack_dense,
    pack_group,
    pack_network,
    pack_symmetric,
    save_network,
    unpack_dense,
    unpack_group,
    unpack_network,
    unpack_symmetric,
)
from .solver import (
    ConvergenceReport,
    LanczosResult,
    OptimizerConfig,
    SweepPlan,
    compress,
    default_penalty,
    exact_sum,
    excited_state,
    ground_state,
    lanczos_lowest,
    make_sweep_plan,
    optimize_double,
    optimize_expanded,
    optimize_single,
    orthogonalize,
)
from .models import (
    ORACLE_DIM_CAP,
    BoseHubbardSpec,
    IsingSpec,
    bose_hubbard_dense_block,
    boson_basis,
    build_bose_hubbard_tpo,
    build_ising_tpo,
    exact_diag_oracle,
    fixed_charge_states,
    graded_operator,
    ising_dense_matrix,
    ising_exact_energy_per_site,
    model_network,
    parity_indices,
    spin_basis,
    tpo_cut_counts,
    tpo_dense_matrix,
)

__version__ = "0.1.0"
