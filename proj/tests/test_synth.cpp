#include <doctest.h>

#include <cmath>
#include <set>

#include "dited/synth.hpp"

using namespace dited;

TEST_CASE("zero shift gives identical base and novel emissions; dynamics never depend on role") {
    SynthSpec spec;
    spec.shift_magnitude = 0.0;
    const SynthSystem sys(spec);
    const Emission eb = sys.emission(Role::base);
    const Emission en = sys.emission(Role::novel);
    CHECK(eb.E.data == en.E.data);
    CHECK(eb.e.data == en.e.data);
    CHECK(eb.noise_scale == en.noise_scale);

    SynthSpec shifted = spec;
    shifted.shift_magnitude = 1.5;
    const SynthSystem sys2(shifted);
    CHECK(sys2.emission(Role::base).E.data != sys2.emission(Role::novel).E.data);

    // the dynamics pool is a pure function of the spec seed, shared by roles
    for (int64_t c = 0; c < spec.total_classes(); ++c) {
        CHECK(sys.class_matrix(c).data == sys2.class_matrix(c).data);
        CHECK(sys.class_offset(c).data == sys2.class_offset(c).data);
    }
}

TEST_CASE("noise-free rollouts from the same initial state are identical") {
    SynthSpec spec;
    const SynthSystem sys(spec);
    Rng rng(5);
    Tensor z0 = Tensor::zeros({spec.Nstar});
    for (int64_t i = 0; i < z0.numel(); ++i) z0.at(i) = rng.normal();
    const Tensor a = sys.rollout_latents(3, z0, 0.0, nullptr);
    const Tensor b = sys.rollout_latents(3, z0, 0.0, nullptr);
    CHECK(a.data == b.data);
}

TEST_CASE("generated features stay strictly inside (0,1) over 10^4 sequences") {
    SynthSpec spec;
    spec.c_base = 10;
    spec.base_per_class = 1000;  // 10^4 sequences
    spec.shift_magnitude = 2.0;
    const SynthSystem sys(spec);
    const Dataset d = sys.generate(Role::base);
    REQUIRE(d.records.size() == 10000);
    double lo = 1.0, hi = 0.0;
    for (const SeqRecord& r : d.records)
        for (double v : r.seq.x.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    CHECK(lo > 0.0);
    CHECK(hi < 1.0);
}

TEST_CASE("datasets carry labels, global class ids and ground-truth latents") {
    SynthSpec spec;
    const SynthSystem sys(spec);
    const Dataset base = sys.generate(Role::base);
    const Dataset novel = sys.generate(Role::novel);
    CHECK(base.num_classes() == spec.c_base);
    CHECK(novel.num_classes() == spec.c_novel);
    CHECK(base.records.size() == static_cast<size_t>(spec.c_base * spec.base_per_class));
    CHECK(novel.records.size() == static_cast<size_t>(spec.c_novel * spec.novel_per_class));
    // disjoint global class sets
    std::set<int32_t> bset(base.class_ids.begin(), base.class_ids.end());
    for (int32_t c : novel.class_ids) CHECK(bset.count(c) == 0);
    for (const SeqRecord& r : base.records) {
        REQUIRE(r.z_true.has_value());
        CHECK(r.z_true->rows() == spec.T);
        CHECK(r.z_true->cols() == spec.Nstar);
    }
    // generation is deterministic in the spec seed
    const Dataset again = sys.generate(Role::base);
    CHECK(again.records.size() == base.records.size());
    CHECK(again.records[7].seq.x.data == base.records[7].seq.x.data);
}

TEST_CASE("episodes: all-way single split covers every class") {
    SynthSpec spec;
    spec.c_novel = 5;
    spec.novel_per_class = 4;
    const SynthSystem sys(spec);
    const Dataset d = sys.generate(Role::novel);
    const auto eps = make_episodes(d, d.num_classes(), 1, 1, 9);
    REQUIRE(eps.size() == 1);
    CHECK(eps[0].class_ids.size() == static_cast<size_t>(d.num_classes()));
    CHECK(eps[0].support.size() == static_cast<size_t>(d.num_classes()));
    CHECK(eps[0].query.size() == d.records.size() - eps[0].support.size());
}

TEST_CASE("episodes: k=1 with 3 samples per class leaves 2 query items per class") {
    SynthSpec spec;
    spec.c_novel = 4;
    spec.novel_per_class = 3;
    const SynthSystem sys(spec);
    const Dataset d = sys.generate(Role::novel);
    const auto eps = make_episodes(d, 4, 1, 5, 10);
    for (const Episode& ep : eps) {
        CHECK(ep.query.size() == 8);
        std::map<int32_t, int> per_class;
        for (size_t idx : ep.query) ++per_class[d.records[idx].seq.label];
        for (const auto& [c, n] : per_class) CHECK(n == 2);
    }
}

TEST_CASE("episodes: deterministic in the seed, support and query always disjoint") {
    SynthSpec spec;
    spec.c_novel = 6;
    spec.novel_per_class = 7;
    const SynthSystem sys(spec);
    const Dataset d = sys.generate(Role::novel);
    const auto a = make_episodes(d, 3, 2, 25, 11);
    const auto b = make_episodes(d, 3, 2, 25, 11);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].support == b[i].support);
        CHECK(a[i].query == b[i].query);
        CHECK(a[i].class_ids == b[i].class_ids);
        CHECK(a[i].support.size() == 6);  // way * k
        std::set<size_t> s(a[i].support.begin(), a[i].support.end());
        for (size_t q : a[i].query) CHECK(s.count(q) == 0);
        // labels of support and query stay within the episode's class set
        std::set<int32_t> cls(a[i].class_ids.begin(), a[i].class_ids.end());
        for (size_t idx : a[i].support) CHECK(cls.count(d.records[idx].seq.label) == 1);
        for (size_t idx : a[i].query) CHECK(cls.count(d.records[idx].seq.label) == 1);
    }
    const auto c = make_episodes(d, 3, 2, 25, 12);
    CHECK(a[0].support != c[0].support);
}

TEST_CASE("episodes: validation errors") {
    SynthSpec spec;
    spec.c_novel = 3;
    spec.novel_per_class = 2;
    const SynthSystem sys(spec);
    const Dataset d = sys.generate(Role::novel);
    CHECK_THROWS_AS(make_episodes(d, 5, 1, 1, 0), DitedError);   // way > classes
    CHECK_THROWS_AS(make_episodes(d, 3, 2, 1, 0), DitedError);   // needs k+1 per class
}

TEST_CASE("ground-truth latents separate classes: nearest centroid >= 90% on the default spec") {
    SynthSpec spec;  // defaults
    const SynthSystem sys(spec);
    const Dataset d = sys.generate(Role::base);
    const int64_t dim = spec.T * spec.Nstar;
    std::vector<std::vector<double>> centroids(static_cast<size_t>(spec.c_base),
                                               std::vector<double>(static_cast<size_t>(dim), 0.0));
    std::vector<int64_t> counts(static_cast<size_t>(spec.c_base), 0);
    // first half per class builds centroids, second half evaluates
    std::vector<size_t> eval_idx;
    for (int32_t c = 0; c < spec.c_base; ++c) {
        const auto idx = d.indices_of_class(c);
        for (size_t i = 0; i < idx.size(); ++i) {
            if (i < idx.size() / 2) {
                for (int64_t j = 0; j < dim; ++j)
                    centroids[static_cast<size_t>(c)][static_cast<size_t>(j)] +=
                        d.records[idx[i]].z_true->at(j);
                ++counts[static_cast<size_t>(c)];
            } else {
                eval_idx.push_back(idx[i]);
            }
        }
    }
    for (int32_t c = 0; c < spec.c_base; ++c)
        for (int64_t j = 0; j < dim; ++j)
            centroids[static_cast<size_t>(c)][static_cast<size_t>(j)] /=
                static_cast<double>(counts[static_cast<size_t>(c)]);

    int64_t correct = 0;
    for (size_t idx : eval_idx) {
        const Tensor& z = *d.records[idx].z_true;
        double best = 1e300;
        int32_t best_c = -1;
        for (int32_t c = 0; c < spec.c_base; ++c) {
            double dist = 0.0;
            for (int64_t j = 0; j < dim; ++j) {
                const double diff = z.at(j) - centroids[static_cast<size_t>(c)][static_cast<size_t>(j)];
                dist += diff * diff;
            }
            if (dist < best) {
                best = dist;
                best_c = c;
            }
        }
        if (best_c == d.records[idx].seq.label) ++correct;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(eval_idx.size());
    CHECK(acc >= 0.90);
}
