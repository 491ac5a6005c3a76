#pragma once

#include <cginv/cgls.hpp>
#include <cginv/linalg.hpp>
#include <cginv/parallel.hpp>
#include <cginv/types.hpp>

#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace cginv {

/// How each Z layer builds its metric B in d = -B ∇F.
///  learned:  B = P_eps(L) with L learnable (diagonal + first sub-diagonal)
///  identity: B = I, L frozen out of the graph
///  newton:   B = P_eps(H)^{-1}, forward only
enum class BMode { learned, identity, newton };

BMode parse_bmode(const std::string& s);
std::string to_string(BMode m);

/// Learnable parameters of one Z layer.
struct StepParams {
    double mu = 2.0;
    Vector l_diag; ///< n entries
    Vector l_sub;  ///< n-1 entries, L(i+1, i)
    Vector eta;    ///< diagonal step sizes
    double a = 0.8;
    double b = std::exp(3.0);
};

struct NetInit {
    double lambda = 0.3;
    double a0 = 1.0;
    double b0 = std::exp(2.0);
    double mu = 2.0;
    double eta = 0.5;
    double a = 0.8;
    double b = std::exp(3.0);
    double eps_guard = 1e-3;
    double eps_psd = 1e-3;
};

/// Θ, ordered by layer. steps[(k-1)*J + (j-1)] holds block (k, j); lambdas[k-1] is λ_k.
struct NetParams {
    int k = 0;
    int j = 1;
    Index n = 0;
    double lambda0 = 0.3;
    double a0 = 1.0;
    double b0 = std::exp(2.0);
    std::vector<StepParams> steps;
    std::vector<double> lambdas;
    double eps_guard = 1e-3;
    double eps_psd = 1e-3;
    std::string nonlinearity = "ln";

    static NetParams initial(int k, int j, Index n, const NetInit& init = {});

    StepParams& step(int k1, int j1) { return steps[static_cast<std::size_t>((k1 - 1) * j + (j1 - 1))]; }
    const StepParams& step(int k1, int j1) const {
        return steps[static_cast<std::size_t>((k1 - 1) * j + (j1 - 1))];
    }

    /// K(J(3n+2)+1)+3.
    Index parameter_count() const;
    /// K(J+1)+4.
    int layer_count() const { return k * (j + 1) + 4; }

    /// Learnable entries in checkpoint order: λ0, a0, b0, then per (k,j):
    /// μ, diag(L), subdiag(L), diag(η), a, b, then λ_1..λ_K.
    Vector flatten() const;
    void unflatten(const Vector& theta);
    void validate() const;
};

/// Guarded values used by the forward pass.
double guard_lambda(double lambda, double eps);
double guard_window(double v, double z_min, double eps);

/// Symmetrize (L + L^T)/2 and clamp its eigenvalues at eps.
Matrix p_eps(const Matrix& l, double eps);

/// Measurement operator together with ||A||_2 for the normalized initial layer.
struct NetOperator {
    Matrix a;
    double a_norm = 1.0;
    explicit NetOperator(Matrix a_in);
};

/// Layer outputs for inspection: z_layers = Z0, then every Z_k^j; u_layers = U0..U_K.
struct NetTrace {
    std::vector<Vector> z_layers;
    std::vector<Vector> u_layers;
};

/// ĉ = U_K ⊙ Z_K^J. Throws NumericalError naming the layer on non-finite activations.
Vector forward(const Vector& y, const NetParams& params, const NetOperator& op, BMode mode = BMode::learned,
               NetTrace* trace = nullptr);

enum class LossKind { ssim, mae };
LossKind parse_loss(const std::string& s);
std::string to_string(LossKind k);

/// Per-sample image loss between Φ ĉ and Φ c: 1 - SSIM or the mean absolute error.
double image_loss(const Vector& c_hat, const Vector& c_true, const Matrix& phi, int n_side, LossKind kind);

struct TrainSample {
    Vector y;
    Vector c;
};

struct BatchGradient {
    double loss = 0.0; ///< mean loss over the batch
    Vector grad;       ///< d loss / d flatten(params)
};

/// Exact reverse-mode gradient of the mean batch loss. Rejects BMode::newton.
BatchGradient grad_params(const std::vector<TrainSample>& batch, const NetParams& params, const NetOperator& op,
                          const Matrix& phi, int n_side, LossKind loss, BMode mode,
                          Execution exec = Execution::parallel);

/// Mean loss without gradients.
double batch_loss(const std::vector<TrainSample>& batch, const NetParams& params, const NetOperator& op,
                  const Matrix& phi, int n_side, LossKind loss, BMode mode, Execution exec = Execution::parallel);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Vector m;
    Vector v;
};

/// One bias-corrected Adam update at step t >= 1.
void adam_step(Vector& theta, const Vector& grad, AdamState& state, long t, const AdamConfig& cfg);

struct TrainConfig {
    int epochs = 30;
    AdamConfig adam;
    int batch_size = 0; ///< 0: whole training split when <= 32 samples, else 32
    int patience = 5;   ///< epochs without validation improvement before stopping; 0 disables
    double validation_fraction = 0.25;
    LossKind loss = LossKind::ssim;
    BMode b_mode = BMode::learned;
    std::uint64_t seed = 0;
    Execution exec = Execution::parallel;
    bool verbose = false;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double best_val_loss = 0.0;
};

struct TrainResult {
    NetParams params; ///< parameters of the best validation epoch
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double initial_val_loss = 0.0;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;
};

TrainResult train(const std::vector<TrainSample>& data, const NetOperator& op, const Matrix& phi, int n_side,
                  NetParams init, const TrainConfig& cfg);

std::string format_history_csv(const std::vector<EpochRecord>& history);

/// Header "cgnet-v1,K,J,n", then one row per block in flatten() order
/// (λ_k one per row) and a trailing "eps_guard,eps_psd" row.
std::string format_checkpoint(const NetParams& params);
NetParams parse_checkpoint(const std::string& text);
void save_checkpoint(const NetParams& params, const std::filesystem::path& path);
NetParams load_checkpoint(const std::filesystem::path& path);

} // namespace cginv
