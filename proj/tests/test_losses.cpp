#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "c2a/gradcheck.hpp"
#include "c2a/losses.hpp"
#include "c2a/model.hpp"

using namespace c2a;

namespace {

Tensor random_tensor(std::vector<std::size_t> dims, SplitMix64& rng, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(std::move(dims));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

double min_abs(const Tensor& t) {
    double m = 1e300;
    for (double v : t.data) m = std::min(m, std::abs(v));
    return m;
}

// Discriminator that forwards the patch-mean of channel 0 through every
// layer, so its score equals the channel-0 mean of the input map.
Discriminator passthrough_disc(std::size_t n_classes) {
    Discriminator d(n_classes, 4, 0.2);
    for (auto& layer : d.layers) {
        layer.weight.fill(0.0);
        layer.bias.fill(0.0);
        const std::size_t in_ch = layer.in_dim / 4;
        for (std::size_t cell = 0; cell < 4; ++cell) layer.weight.at(0, cell * in_ch) = 0.25;
    }
    d.head.weight.fill(0.0);
    d.head.bias.fill(0.0);
    d.head.weight.at(0, 0) = 1.0;
    return d;
}

// Zeroed discriminator emits exactly its head bias.
Discriminator constant_disc(std::size_t n_classes, double value) {
    Discriminator d(n_classes, 4, 0.2);
    for (auto& layer : d.layers) {
        layer.weight.fill(0.0);
        layer.bias.fill(0.0);
    }
    d.head.weight.fill(0.0);
    d.head.bias.fill(0.0);
    d.head.bias[0] = value;
    return d;
}

ClusterAssignment assign_of(const ClusterBank& bank, const Tensor& rows) {
    return cluster_assign_batch(bank, rows, 1.0);
}

double row_gap(const ClusterAssignment& a) {
    double gap = 1e300;
    for (std::size_t r = 0; r < a.p.dims[0]; ++r) {
        double top1 = -1, top2 = -1;
        for (std::size_t k = 0; k < a.p.dims[1]; ++k) {
            const double v = a.p.at(r, k);
            if (v > top1) {
                top2 = top1;
                top1 = v;
            } else if (v > top2) {
                top2 = v;
            }
        }
        gap = std::min(gap, top1 - top2);
    }
    return gap;
}

}  // namespace

TEST_CASE("sup_loss hand values") {
    // near-one-hot predictions -> loss near 0
    Tensor probs({2, 2, 4});
    Tensor labels({2, 2});
    for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 2; ++x) {
            const std::size_t cls = (y + x) % 4;
            labels.at(y, x) = static_cast<double>(cls);
            for (std::size_t j = 0; j < 4; ++j)
                probs.at(y, x, j) = j == cls ? 1.0 - 1e-12 : 1e-12 / 3;
        }
    REQUIRE(sup_loss(probs, labels, 0).loss == Catch::Approx(0.0).margin(1e-10));

    // uniform predictions, C=4 -> ln 4
    probs.fill(0.25);
    const SupLoss uniform = sup_loss(probs, labels, 0);
    REQUIRE(uniform.loss == Catch::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("sup_loss ignores IGNORE pixels in numerator and denominator") {
    Tensor probs({1, 2, 2});
    probs.at(0, 0, 0) = 0.5;
    probs.at(0, 0, 1) = 0.5;
    probs.at(0, 1, 0) = 0.9;
    probs.at(0, 1, 1) = 0.1;
    Tensor labels({1, 2});
    labels.at(0, 0) = static_cast<double>(IGNORE_LABEL);
    labels.at(0, 1) = 0.0;
    const SupLoss r = sup_loss(probs, labels, 0);
    REQUIRE(r.valid_pixels == 1);
    REQUIRE(r.loss == Catch::Approx(-std::log(0.9)).epsilon(1e-12));
    REQUIRE(r.d_logits.at(0, 0, 0) == 0.0);
    REQUIRE(r.d_logits.at(0, 0, 1) == 0.0);

    labels.at(0, 1) = static_cast<double>(IGNORE_LABEL);
    const SupLoss all_ignored = sup_loss(probs, labels, 0);
    REQUIRE(all_ignored.loss == 0.0);
    REQUIRE(l2_norm(all_ignored.d_logits) == 0.0);
}

TEST_CASE("sup_loss label range errors") {
    Tensor probs({1, 1, 2});
    probs.fill(0.5);
    Tensor labels({1, 1});
    labels.at(0, 0) = 7.0;
    REQUIRE_THROWS_AS(sup_loss(probs, labels, 0), world_error);
    labels.at(0, 0) = 3.0;  // below base 4
    REQUIRE_THROWS_AS(sup_loss(probs, labels, 4), world_error);
}

TEST_CASE("sup_loss gradient matches finite differences") {
    SplitMix64 rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor logits = random_tensor({4, 4, 3}, rng, -1, 1);
        Tensor labels({4, 4});
        for (double& v : labels.data) v = static_cast<double>(rng.index(3));
        labels.at(0, 0) = static_cast<double>(IGNORE_LABEL);

        auto loss = [&] { return sup_loss(softmax(logits), labels, 0).loss; };
        Tensor analytic = sup_loss(softmax(logits), labels, 0).d_logits;
        std::vector<ParamRef> params = {{"logits", &logits, &analytic}};
        REQUIRE(finite_diff_check(loss, params, 1e-5) < 1e-4);
    }
}

TEST_CASE("adv_loss with frozen constant discriminators") {
    SplitMix64 rng(33);
    std::vector<Tensor> maps;
    for (int i = 0; i < 3; ++i) maps.push_back(random_tensor({16, 16, 3}, rng, 0, 1));

    Discriminator zero = constant_disc(3, 0.0);
    REQUIRE(adv_loss(zero, maps).loss == 0.0);

    Discriminator one = constant_disc(3, 1.0);
    REQUIRE(adv_loss(one, maps).loss == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("adv_loss leaves discriminator grads untouched") {
    SplitMix64 rng(34);
    Discriminator d(3, 4, 0.2);
    d.layers[0].init(rng);
    d.layers[1].init(rng);
    d.layers[2].init(rng);
    d.layers[3].init(rng);
    d.head.init(rng);
    std::vector<Tensor> maps = {random_tensor({16, 16, 3}, rng, 0, 1)};
    adv_loss(d, maps);
    for (auto& l : d.layers) REQUIRE(l2_norm(l.grad_weight) == 0.0);
    REQUIRE(l2_norm(d.head.grad_weight) == 0.0);
    REQUIRE(l2_norm(d.head.grad_bias) == 0.0);
}

TEST_CASE("adv_loss generator gradient matches finite differences with D fixed") {
    int done = 0;
    for (std::uint64_t seed = 0; done < 5 && seed < 60; ++seed) {
        ModelConfig cfg;
        cfg.stride = 4;
        cfg.encoder_hidden = 8;
        cfg.f_d = 6;
        cfg.f_e = 4;
        cfg.n_source_classes = 3;
        cfg.disc_base = 4;
        Model model(cfg);
        model.init(seed + 500);
        SplitMix64 rng = stream_for(seed, 95);
        Tensor image = random_tensor({16, 16, 3}, rng, -2, 2);

        Encoder::Cache ec;
        Decoder::Cache dc;
        Discriminator::Cache xc;
        const Tensor map = model.encoder.forward(image, ec);
        const Tensor pm = model.decoder_s.forward(map, dc);
        model.disc.forward(pm, xc);
        double guard = min_abs(ec.z1);
        for (const auto& lc : xc.per_layer) guard = std::min(guard, min_abs(lc.z));
        if (guard < 1e-3) continue;
        ++done;

        auto loss = [&] {
            Encoder::Cache e;
            Decoder::Cache d;
            std::vector<Tensor> maps = {
                model.decoder_s.forward(model.encoder.forward(image, e), d)};
            return adv_loss(model.disc, maps).loss;
        };
        model.encoder.l1.zero_grad();
        model.encoder.l2.zero_grad();
        model.decoder_s.head.zero_grad();
        {
            Encoder::Cache e;
            Decoder::Cache d;
            std::vector<Tensor> maps = {
                model.decoder_s.forward(model.encoder.forward(image, e), d)};
            AdvLoss adv = adv_loss(model.disc, maps);
            const Tensor d_map = model.decoder_s.backward_probs(d, adv.d_prob_maps[0]);
            model.encoder.backward(e, d_map);
        }
        std::vector<ParamRef> params = {
            {"enc.l1.w", &model.encoder.l1.weight, &model.encoder.l1.grad_weight},
            {"enc.l1.b", &model.encoder.l1.bias, &model.encoder.l1.grad_bias},
            {"enc.l2.w", &model.encoder.l2.weight, &model.encoder.l2.grad_weight},
            {"enc.l2.b", &model.encoder.l2.bias, &model.encoder.l2.grad_bias},
            {"dec.w", &model.decoder_s.head.weight, &model.decoder_s.head.grad_weight},
            {"dec.b", &model.decoder_s.head.bias, &model.decoder_s.head.grad_bias},
        };
        REQUIRE(finite_diff_check(loss, params, 1e-5) < 1e-4);
    }
    REQUIRE(done == 5);
}

TEST_CASE("disc_loss hand values") {
    // channel-0 passthrough scorer: D(all zeros)=0, D(all ones)=1
    Discriminator d = passthrough_disc(3);
    Tensor zeros({16, 16, 3});
    Tensor ones({16, 16, 3});
    ones.fill(1.0);
    REQUIRE(disc_loss(d, {zeros}, {ones}) == Catch::Approx(0.0).margin(1e-15));

    Discriminator half = constant_disc(3, 0.5);
    REQUIRE(disc_loss(half, {zeros}, {ones}) == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("disc_loss gradient matches finite differences") {
    int done = 0;
    for (std::uint64_t seed = 0; done < 5 && seed < 60; ++seed) {
        Discriminator d(3, 4, 0.2);
        SplitMix64 init = stream_for(seed, 96);
        for (auto& l : d.layers) l.init(init);
        d.head.init(init);
        SplitMix64 rng = stream_for(seed, 97);
        std::vector<Tensor> src = {random_tensor({16, 16, 3}, rng, 0, 1)};
        std::vector<Tensor> aux = {random_tensor({16, 16, 3}, rng, 0, 1),
                                   random_tensor({16, 16, 3}, rng, 0, 1)};
        double guard = 1e300;
        for (const auto& batch : {src, aux})
            for (const auto& pm : batch) {
                Discriminator::Cache c;
                d.forward(pm, c);
                for (const auto& lc : c.per_layer) guard = std::min(guard, min_abs(lc.z));
            }
        if (guard < 1e-3) continue;
        ++done;

        auto loss = [&] {
            Discriminator probe = d;  // value copy so grads never leak
            return disc_loss(probe, src, aux);
        };
        for (auto& l : d.layers) l.zero_grad();
        d.head.zero_grad();
        disc_loss(d, src, aux);
        std::vector<ParamRef> params;
        for (std::size_t i = 0; i < d.layers.size(); ++i) {
            params.push_back({"w", &d.layers[i].weight, &d.layers[i].grad_weight});
            params.push_back({"b", &d.layers[i].bias, &d.layers[i].grad_bias});
        }
        params.push_back({"hw", &d.head.weight, &d.head.grad_weight});
        params.push_back({"hb", &d.head.bias, &d.head.grad_bias});
        REQUIRE(finite_diff_check(loss, params, 1e-5) < 1e-4);
    }
    REQUIRE(done == 5);
}

TEST_CASE("cluster_loss worked example: matched center with orthogonal alternative") {
    ClusterBank bank(2, 4);
    bank.centers.fill(0.0);
    bank.centers.at(0, 0) = 2.0;   // mu_0 along e0
    bank.centers.at(1, 1) = 0.7;   // mu_1 along e1, orthogonal
    Tensor rows({3, 4});
    for (std::size_t r = 0; r < 3; ++r) rows.at(r, 0) = 0.5 + 0.25 * static_cast<double>(r);
    const ClusterLoss cl = cluster_loss(bank, rows);
    const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
    REQUIRE(cl.loss == Catch::Approx(expected).epsilon(1e-12));
    REQUIRE(cl.loss == Catch::Approx(0.3133).margin(1e-4));
}

TEST_CASE("cluster_loss with identical centers equals ln K") {
    ClusterBank bank(5, 3);
    for (std::size_t i = 0; i < 5; ++i) {
        bank.centers.at(i, 0) = 1.0;
        bank.centers.at(i, 1) = -0.5;
        bank.centers.at(i, 2) = 0.25;
    }
    SplitMix64 rng(41);
    Tensor rows({7, 3});
    for (double& v : rows.data) v = rng.uniform(-1, 1);
    const ClusterLoss cl = cluster_loss(bank, rows);
    REQUIRE(cl.loss == Catch::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("cluster_loss stays at or below ln K") {
    SplitMix64 rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        ClusterBank bank(4, 5);
        bank.init(rng);
        Tensor rows({6, 5});
        for (double& v : rows.data) v = rng.uniform(-2, 2);
        const ClusterLoss cl = cluster_loss(bank, rows);
        REQUIRE(cl.loss <= std::log(4.0) + 1e-12);
        REQUIRE(cl.loss >= 0.0);
    }
}

TEST_CASE("cluster_loss rejects zero-norm embeddings and empty sets") {
    ClusterBank bank(2, 3);
    SplitMix64 rng(43);
    bank.init(rng);
    Tensor rows({2, 3});
    rows.at(0, 0) = 1.0;  // second row all zero
    REQUIRE_THROWS_AS(cluster_loss(bank, rows), numeric_error);
    REQUIRE_THROWS_AS(cluster_loss(bank, Tensor({0, 3})), shape_error);
}

TEST_CASE("cluster_loss gradients match finite differences") {
    int done = 0;
    for (std::uint64_t seed = 0; done < 5 && seed < 60; ++seed) {
        SplitMix64 rng = stream_for(seed, 98);
        ClusterBank bank(3, 4);
        bank.init(rng);
        Tensor rows = random_tensor({5, 4}, rng, -1, 1);
        if (row_gap(assign_of(bank, rows)) < 1e-3) continue;  // argmax must not flip under fd
        ++done;

        auto loss = [&] {
            const ClusterAssignment a = cluster_assign_batch(bank, rows, 1.0);
            return cluster_ce_from_assign(a, nullptr);
        };
        bank.grad_centers.fill(0.0);
        Tensor d_rows({5, 4});
        {
            const ClusterAssignment a = cluster_assign_batch(bank, rows, 1.0);
            Tensor d_p({5, 3});
            cluster_ce_from_assign(a, &d_p);
            cluster_assign_backward(bank, rows, a, d_p, d_rows, 1.0);
        }
        std::vector<ParamRef> params = {{"centers", &bank.centers, &bank.grad_centers},
                                        {"rows", &rows, &d_rows}};
        REQUIRE(finite_diff_check(loss, params, 1e-5) < 1e-4);
    }
    REQUIRE(done == 5);
}

TEST_CASE("target_distribution_q hand values") {
    // single point: q_k = p_k^2 / sum p^2
    Tensor p1 = Tensor::from({1, 2}, {0.5, 0.5});
    const Tensor q1 = target_distribution_q(p1);
    REQUIRE(q1.at(0, 0) == Catch::Approx(0.5).epsilon(1e-14));
    REQUIRE(q1.at(0, 1) == Catch::Approx(0.5).epsilon(1e-14));

    // uniform stays uniform
    Tensor pu({4, 3});
    pu.fill(1.0 / 3);
    const Tensor qu = target_distribution_q(pu);
    for (double v : qu.data) REQUIRE(v == Catch::Approx(1.0 / 3).epsilon(1e-13));

    // worked example: f = [1.4, 0.6]; q1 = [243/250, 7/250]; q2 = [0.3, 0.7]
    Tensor p = Tensor::from({2, 2}, {0.9, 0.1, 0.5, 0.5});
    const Tensor q = target_distribution_q(p);
    REQUIRE(q.at(0, 0) == Catch::Approx(0.972).epsilon(1e-12));
    REQUIRE(q.at(0, 1) == Catch::Approx(0.028).epsilon(1e-12));
    REQUIRE(q.at(1, 0) == Catch::Approx(0.3).epsilon(1e-12));
    REQUIRE(q.at(1, 1) == Catch::Approx(0.7).epsilon(1e-12));
    REQUIRE(q.at(0, 0) == Catch::Approx(0.9720).margin(1e-6));
    REQUIRE(q.at(0, 1) == Catch::Approx(0.0280).margin(1e-6));
}

TEST_CASE("target_distribution_q rows sum to one on random batches") {
    SplitMix64 rng(51);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t m = 1 + rng.index(6);
        const std::size_t k = 2 + rng.index(5);
        Tensor logits({m, k});
        for (double& v : logits.data) v = rng.uniform(-4, 4);
        const Tensor q = target_distribution_q(softmax(logits));
        for (std::size_t r = 0; r < m; ++r) {
            double sum = 0;
            for (std::size_t j = 0; j < k; ++j) sum += q.at(r, j);
            REQUIRE(std::abs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("target_distribution_q sharpens single rows") {
    SplitMix64 rng(52);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor logits({1, 4});
        for (double& v : logits.data) v = rng.uniform(-2, 2);
        const Tensor p = softmax(logits);
        const Tensor q = target_distribution_q(p);
        double pmax = 0, qmax = 0;
        for (std::size_t j = 0; j < 4; ++j) {
            pmax = std::max(pmax, p.at(0, j));
            qmax = std::max(qmax, q.at(0, j));
        }
        REQUIRE(qmax >= pmax - 1e-15);
    }
}

TEST_CASE("kl_loss hand values and positivity") {
    Tensor p = Tensor::from({1, 2}, {0.5, 0.5});
    REQUIRE(kl_loss(p, p).loss == 0.0);

    const Tensor q = Tensor::from({1, 2}, {1.0, 0.0});
    REQUIRE(kl_loss(p, q).loss == Catch::Approx(std::log(2.0)).epsilon(1e-12));

    SplitMix64 rng(61);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor lp({3, 4}), lq({3, 4});
        for (double& v : lp.data) v = rng.uniform(-3, 3);
        for (double& v : lq.data) v = rng.uniform(-3, 3);
        const Tensor pp = softmax(lp);
        const Tensor qq = softmax(lq);
        REQUIRE(kl_loss(pp, qq).loss >= 0.0);
        REQUIRE(kl_loss(pp, pp).loss == Catch::Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("kl_loss gradient through cluster assignment matches finite differences") {
    int done = 0;
    for (std::uint64_t seed = 0; done < 5 && seed < 60; ++seed) {
        SplitMix64 rng = stream_for(seed, 99);
        ClusterBank bank(3, 4);
        bank.init(rng);
        Tensor rows = random_tensor({4, 4}, rng, -1, 1);
        if (row_gap(assign_of(bank, rows)) < 1e-3) continue;
        ++done;

        // q frozen at the base point, per the stop-gradient contract
        const Tensor q = target_distribution_q(assign_of(bank, rows).p);
        auto loss = [&] {
            const ClusterAssignment a = cluster_assign_batch(bank, rows, 1.0);
            return kl_from(a.p, q, nullptr);
        };
        bank.grad_centers.fill(0.0);
        Tensor d_rows({4, 4});
        {
            const ClusterAssignment a = cluster_assign_batch(bank, rows, 1.0);
            Tensor d_p({4, 3});
            kl_from(a.p, q, &d_p);
            cluster_assign_backward(bank, rows, a, d_p, d_rows, 1.0);
        }
        std::vector<ParamRef> params = {{"centers", &bank.centers, &bank.grad_centers},
                                        {"rows", &rows, &d_rows}};
        REQUIRE(finite_diff_check(loss, params, 1e-5) < 1e-4);
    }
    REQUIRE(done == 5);
}

TEST_CASE("lambda_c_schedule endpoints and monotonicity") {
    REQUIRE(lambda_c_schedule(0.0) == 0.0);
    REQUIRE(lambda_c_schedule(1.0) ==
            Catch::Approx(2.0 / (1.0 + std::exp(-10.0)) - 1.0).epsilon(1e-15));
    REQUIRE(lambda_c_schedule(1.0) == Catch::Approx(0.999909).margin(1e-6));
    REQUIRE(lambda_c_schedule(0.1) == Catch::Approx(std::tanh(0.5)).epsilon(1e-12));
    REQUIRE(lambda_c_schedule(0.1) == Catch::Approx(0.462117).margin(1e-6));

    double prev = -1;
    for (int i = 0; i <= 100; ++i) {
        const double v = lambda_c_schedule(i / 100.0);
        REQUIRE(v > prev);
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1.0);
        prev = v;
    }
    REQUIRE(lambda_c_schedule(-3.0) == 0.0);
    REQUIRE(lambda_c_schedule(7.0) == lambda_c_schedule(1.0));
}

TEST_CASE("total_objective composes the report") {
    LossReport r;
    r.l_sup_s = 0.5;
    r.l_sup_t = 0.25;
    r.l_adv = 2.0;
    r.l_disc = 9.0;  // never part of the generator total
    r.l_c = 1.0;
    r.l_kl = 0.5;
    r.lambda_adv = 0.001;
    r.lambda_c = 0.0;
    REQUIRE(total_objective(r) == Catch::Approx(0.75 + 0.001 * 2.0).epsilon(1e-15));

    r.lambda_c = 0.5;
    REQUIRE(total_objective(r) == Catch::Approx(0.75 + 0.002 + 0.5 * 1.5).epsilon(1e-15));

    LossReport zero;
    REQUIRE(total_objective(zero) == 0.0);
}
