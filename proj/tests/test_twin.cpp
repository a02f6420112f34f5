#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>

#include "rfat/chain.hpp"
#include "rfat/error.hpp"
#include "rfat/twin.hpp"

using namespace rfat;

namespace {

std::vector<double> flatten(const std::vector<DenseLayer>& layers) {
    std::vector<double> v;
    for (const auto& l : layers) {
        v.insert(v.end(), l.weights.data(), l.weights.data() + l.weights.size());
        v.insert(v.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return v;
}

double& parameter(ArvtdnnModel& m, std::size_t index) {
    for (auto& l : m.layers) {
        const auto nw = static_cast<std::size_t>(l.weights.size());
        if (index < nw) return l.weights.data()[index];
        index -= nw;
        const auto nb = static_cast<std::size_t>(l.bias.size());
        if (index < nb) return l.bias.data()[index];
        index -= nb;
    }
    throw std::out_of_range("parameter index");
}

CVec random_signal(std::size_t n, double scale, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, scale);
    CVec x(n);
    for (auto& v : x) {
        const double re = g(rng);
        v = {re, g(rng)};
    }
    return x;
}

}  // namespace

TEST_CASE("arvtdnn feature layout") {
    const std::vector<cplx> window{{1.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
    const std::vector<double> expected{1, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    CHECK(arvtdnn_features(window, 3, 3) == expected);

    const auto f = arvtdnn_features(std::vector<cplx>{{0.6, -0.8}}, 0, 1);
    REQUIRE(f.size() == 3);
    CHECK(f[0] == doctest::Approx(0.6));
    CHECK(f[1] == doctest::Approx(-0.8));
    CHECK(f[2] == doctest::Approx(1.0));

    for (double v : arvtdnn_features(std::vector<cplx>(3, cplx{}), 2, 4)) CHECK(v == 0.0);
    CHECK(arvtdnn_features(std::vector<cplx>(3, cplx{}), 2, 4).size() == 3 * 6);
    CHECK_THROWS_AS(arvtdnn_features(std::vector<cplx>(2, cplx{}), 3, 3), ParameterError);
}

TEST_CASE("feature matrix uses zero pre-history") {
    const CVec x{{0.5, 0.1}, {-0.2, 0.3}, {0.0, -0.4}};
    const Eigen::MatrixXd f = arvtdnn_feature_matrix(x, 2, 2);
    REQUIRE(f.rows() == 12);
    REQUIRE(f.cols() == 3);
    for (Eigen::Index n = 0; n < 3; ++n) {
        std::vector<cplx> window;
        for (int m = 0; m <= 2; ++m) window.push_back(n - m >= 0 ? x[static_cast<std::size_t>(n - m)] : cplx{});
        const auto col = arvtdnn_features(window, 2, 2);
        for (Eigen::Index r = 0; r < 12; ++r) CHECK(f(r, n) == col[static_cast<std::size_t>(r)]);
    }
}

TEST_CASE("zero network gives zero output; forward is deterministic") {
    ArvtdnnModel m = ArvtdnnModel::initialized(3, 3, {8, 4}, 1);
    const CVec x = random_signal(500, 0.3, 2);
    const CVec a = arvtdnn_forward(m, x);
    CHECK(a.size() == x.size());
    CHECK(a == arvtdnn_forward(m, x));
    for (auto& l : m.layers) {
        l.weights.setZero();
        l.bias.setZero();
    }
    for (const auto& v : arvtdnn_forward(m, x)) CHECK(v == cplx{});
}

TEST_CASE("model invariants are enforced") {
    ArvtdnnModel m = ArvtdnnModel::initialized(3, 3, {8}, 1);
    CHECK(m.input_width() == 20);
    CHECK(m.layers.front().weights.cols() == 20);
    CHECK(m.layers.back().weights.rows() == 2);
    CHECK(m.parameter_count() == 20 * 8 + 8 + 8 * 2 + 2);
    ArvtdnnModel wrong = m;
    wrong.memory_depth = 2;
    CHECK_THROWS_AS(arvtdnn_forward(wrong, CVec(10, cplx{})), ParameterError);
    ArvtdnnModel nan = m;
    nan.layers[0].weights(0, 0) = std::nan("");
    CHECK_THROWS_AS(nan.validate(), ParameterError);
    CVec bad(10, cplx{});
    bad[3] = {std::numeric_limits<double>::infinity(), 0.0};
    CHECK_THROWS_AS(arvtdnn_forward(m, bad), ParameterError);
}

TEST_CASE("glorot initialization bounds") {
    const ArvtdnnModel m = ArvtdnnModel::initialized(1, 2, {6, 5}, 9);
    for (const auto& l : m.layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.weights.rows() + l.weights.cols()));
        CHECK(l.weights.cwiseAbs().maxCoeff() <= limit);
        CHECK(l.bias.isZero());
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    for (std::uint64_t seed : {1, 2, 3}) {
        ArvtdnnModel m = ArvtdnnModel::initialized(1, 2, {4}, seed);
        for (auto& l : m.layers) l.bias.setRandom();
        const CVec x = random_signal(40, 0.5, seed + 10);
        const CVec y = random_signal(40, 0.5, seed + 20);
        const Eigen::MatrixXd f = arvtdnn_feature_matrix(x, 1, 2);
        Eigen::MatrixXd t(2, 40);
        for (Eigen::Index n = 0; n < 40; ++n) {
            t(0, n) = y[static_cast<std::size_t>(n)].real();
            t(1, n) = y[static_cast<std::size_t>(n)].imag();
        }
        std::vector<DenseLayer> grad;
        arvtdnn_loss_and_gradient(m, f, t, grad);
        const std::vector<double> analytic = flatten(grad);
        REQUIRE(analytic.size() == m.parameter_count());

        const double h = 1e-6;
        std::vector<DenseLayer> scratch;
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            double& p = parameter(m, i);
            const double saved = p;
            p = saved + h;
            const double up = arvtdnn_loss_and_gradient(m, f, t, scratch);
            p = saved - h;
            const double down = arvtdnn_loss_and_gradient(m, f, t, scratch);
            p = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-4});
            CHECK(std::abs(numeric - analytic[i]) / scale <= 1e-5);
        }
    }
}

TEST_CASE("training learns a linear system to -40 dB") {
    const std::vector<MemoryPolyTerm> half{{1, 0, {0.5, 0.0}}};
    const auto train = make_if_amp_training_set(24, -30.0, 0.0, half, 4);
    TrainingSettings s;
    s.epochs = 200;
    const TrainResult r = arvtdnn_train(train, 3, 3, {16}, s, 5);
    CHECK(r.report.epoch_loss.back() < r.report.epoch_loss.front());
    const auto held_out = make_if_amp_training_set(6, -30.0, 0.0, half, 99);
    CVec ref, est;
    for (const auto& p : held_out) {
        const CVec out = arvtdnn_forward(r.model, p.input);
        ref.insert(ref.end(), p.target.begin(), p.target.end());
        est.insert(est.end(), out.begin(), out.end());
    }
    CHECK(nmse_db(ref, est) <= -40.0);
    CHECK(r.model.training.seed == 5);
    CHECK(r.model.training.epochs == static_cast<int>(r.report.epoch_loss.size()));
    CHECK(r.model.training.final_nmse_db == r.report.final_nmse_db);
}

TEST_CASE("training is deterministic given the seed") {
    const std::vector<MemoryPolyTerm> half{{1, 0, {0.5, 0.0}}};
    const auto train = make_if_amp_training_set(4, -20.0, -10.0, half, 1);
    TrainingSettings s;
    s.epochs = 5;
    const TrainResult a = arvtdnn_train(train, 1, 2, {6}, s, 3);
    const TrainResult b = arvtdnn_train(train, 1, 2, {6}, s, 3);
    CHECK(flatten(a.model.layers) == flatten(b.model.layers));
    CHECK(a.report.epoch_loss == b.report.epoch_loss);
}

TEST_CASE("training errors") {
    TrainingSettings s;
    s.epochs = 5;
    std::vector<FramePair> misaligned{{CVec(10, cplx{}), CVec(9, cplx{})}};
    CHECK_THROWS_AS(arvtdnn_train(misaligned, 1, 1, {4}, s, 0), ParameterError);
    CHECK_THROWS_AS(arvtdnn_train({}, 1, 1, {4}, s, 0), ParameterError);

    std::vector<FramePair> huge{{random_signal(300, 0.1, 1), CVec(300, cplx{1e200, 0.0})},
                                {random_signal(300, 0.1, 2), CVec(300, cplx{1e200, 0.0})}};
    try {
        arvtdnn_train(huge, 1, 1, {4}, s, 0);
        FAIL("expected a training error");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
    }

    // Identical feature columns and a zero step leave the loss unchanged.
    s.learning_rate = 0.0;
    std::vector<FramePair> flat{{CVec(300, cplx{}), CVec(300, cplx{1.0, 0.0})},
                                {CVec(300, cplx{}), CVec(300, cplx{1.0, 0.0})}};
    CHECK_THROWS_AS(arvtdnn_train(flat, 1, 1, {4}, s, 0), TrainingError);
}

TEST_CASE("nmse examples and scale law") {
    const CVec r = random_signal(1000, 1.0, 3);
    CHECK(nmse_db(r, r) == -120.0);
    CVec e = r;
    for (auto& v : e) v *= 1.1;
    CHECK(nmse_db(r, e) == doctest::Approx(-20.0).epsilon(1e-9));
    CHECK(nmse_db(r, CVec(r.size(), cplx{})) == doctest::Approx(0.0).epsilon(1e-12));
    for (double c : {0.3, 0.9, 1.5, -2.0}) {
        CVec s = r;
        for (auto& v : s) v *= c;
        CHECK(std::abs(nmse_db(r, s) - 20.0 * std::log10(std::abs(c - 1.0))) < 1e-9);
    }
    CHECK_THROWS_AS(nmse_db(r, CVec(5, cplx{})), ParameterError);
    CHECK_THROWS_AS(nmse_db(CVec(5, cplx{}), CVec(5, cplx{})), ParameterError);
}

TEST_CASE("model save/load reproduces forward outputs bit-exactly") {
    ArvtdnnModel m = ArvtdnnModel::initialized(3, 3, {12, 7}, 77);
    for (auto& l : m.layers) l.bias.setRandom();
    m.training = {77, 42, -31.25};
    const auto path = std::filesystem::temp_directory_path() / "rfat_model_roundtrip.json";
    save_model(m, path);
    const ArvtdnnModel back = load_model(path);
    std::filesystem::remove(path);
    CHECK(flatten(back.layers) == flatten(m.layers));
    CHECK(back.hidden_sizes == m.hidden_sizes);
    CHECK(back.training.seed == 77);
    CHECK(back.training.epochs == 42);
    CHECK(back.training.final_nmse_db == -31.25);
    const CVec x = random_signal(300, 0.4, 1);
    CHECK(arvtdnn_forward(back, x) == arvtdnn_forward(m, x));

    const std::string text = model_to_json(m);
    CHECK(text.find("\"format_version\"") != std::string::npos);
    CHECK_THROWS_AS(model_from_json("{not json"), LoadError);
    CHECK_THROWS_AS(model_from_json("{\"format_version\": 1}"), LoadError);
    std::string wrong_width = text;
    wrong_width.replace(wrong_width.find("\"M\": 3"), 6, "\"M\": 2");
    CHECK_THROWS_AS(model_from_json(wrong_width), LoadError);
    CHECK_THROWS_AS(load_model("/nonexistent/model.json"), LoadError);
}

TEST_CASE("filter twin shares the chain design") {
    for (double bw : {50e3, 180e3, 399e3}) {
        const FilterTwin t = build_filter_twin(bw, 1e6);
        const TransferFunction d = design_butterworth_lowpass(bw, 1e6, 4);
        CHECK(t.tf.b == d.b);
        CHECK(t.tf.a == d.a);
        CHECK(t.tf.a.front() == 1.0);
        CHECK(t.stable());
        CHECK(t.response_db(0.0) == doctest::Approx(0.0).epsilon(1e-6));
        CHECK(std::abs(t.response_db(bw) + 3.0103) < 0.01);
        const CVec x = random_signal(256, 0.2, 4);
        CHECK(apply_transfer_function(t.tf, x) == filter_apply(x, bw, 1e6));
    }
    CHECK_THROWS_AS(build_filter_twin(6e5, 1e6), ParameterError);
}

TEST_CASE("twin with the ground-truth amplifier reproduces the chain") {
    const IqFrame stim = generate_qam_frame(512, 16, 8, 0.25, 7);
    const TwinChain twin{ChainConstants{}, default_if_amp_terms()};
    for (const Scenario s : {Scenario{-25.0, 0.0, 1}, Scenario{-45.0, 12e3, 2}, Scenario{-10.0, -7e3, 3}}) {
        HardwareConfig c;
        c.lo_freq_offset_hz = s.carrier_offset_hz / 2.0;
        const double chain = run_chain(stim, c, s).evm_percent;
        const double predicted = twin_run_chain(twin, stim, c, s).evm_percent;
        CHECK(std::abs(predicted - chain) <= 0.02 * chain);
    }
    HardwareConfig c;
    c.if_gain_db = 0.0;
    const Scenario s{-45.0, 0.0, 5};
    const double p0 = twin_run_chain(twin, stim, c, s).probes.p_if_dbfs;
    c.if_gain_db = 6.0;
    const double p1 = twin_run_chain(twin, stim, c, s).probes.p_if_dbfs;
    CHECK(std::abs(p1 - p0 - 6.0) <= 1.0);
}

TEST_CASE("validation export formats") {
    const ArvtdnnModel m = ArvtdnnModel::initialized(3, 3, {8}, 2);
    const IqFrame drive = generate_qam_frame(128, 16, 8, 0.25, 3);
    const ValidationData d = export_validation_data(m, default_if_amp_terms(), drive);
    REQUIRE(d.psd.size() == 256);
    CHECK(d.psd.front().freq_hz > -drive.sample_rate_hz / 2.0);
    CHECK(d.psd.back().freq_hz == doctest::Approx(drive.sample_rate_hz / 2.0));
    for (std::size_t i = 1; i < d.psd.size(); ++i) CHECK(d.psd[i].freq_hz > d.psd[i - 1].freq_hz);
    CHECK(d.amam.size() == drive.samples.size());
    for (std::size_t n = 0; n < d.amam.size(); ++n) CHECK(d.amam[n].in_env == std::abs(drive.samples[n]));
}

TEST_CASE("am/am gain gap of a uniformly scaled twin") {
    std::vector<AmAmRow> rows;
    for (int i = 1; i <= 1000; ++i) {
        const double a = i / 1000.0;
        rows.push_back({a, 0.9 * a, 0.99 * a});
    }
    CHECK(amam_gain_gap_db(rows, 0.0, 1.0, 10) == doctest::Approx(20.0 * std::log10(1.1)).epsilon(1e-9));
    CHECK_THROWS_AS(amam_gain_gap_db(rows, 1.0, 0.0, 10), ParameterError);
}

TEST_CASE("if amp training frames span the requested drive range") {
    const auto pairs = make_if_amp_training_set(7, -30.0, 0.0, default_if_amp_terms(), 1);
    REQUIRE(pairs.size() == 7);
    CHECK(measure_power_dbfs(pairs.front().input) == doctest::Approx(-30.0).epsilon(1e-9));
    CHECK(measure_power_dbfs(pairs.back().input) == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    for (const auto& p : pairs) CHECK(p.target == memory_polynomial(p.input, default_if_amp_terms()));
}
