// Synthetic shopping-query generator.
//
// Every query names a product category plus some of {attribute, brand,
// color}. Product text is built from the label that was drawn for it:
//   Exact       same category, and the query's attribute, brand and color
//   Substitute  a related product with the query's attribute, but a
//               different brand and color
//   Complement  an accessory of the category ("case for phone")
//   Irrelevant  a product from a pool no query ever asks for
// Each of those words appears once, in the title; bullets and description
// are drawn from a shared filler pool, so the signal is carried by token
// overlap with the query rather than by text length. A small fraction of
// recorded labels are redrawn from the priors to imitate annotation noise;
// redrawing from the same priors leaves the label marginals unchanged.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "esci/dataset.h"
#include "esci/error.h"
#include "esci/rng.h"

namespace esci {
namespace {

constexpr double kLabelNoise = 0.02;
constexpr std::size_t kMinGroup = 2;
constexpr std::size_t kMaxGroup = 16;

// Per-locale surface forms in (en, es, jp) order.
using Word = std::array<std::string_view, 3>;

struct Category {
  Word noun;
  std::vector<Word> substitutes;  // related products that could stand in
  std::vector<Word> accessories;
};

const std::vector<Category>& categories() {
  static const std::vector<Category> kCategories = {
      {{"shoes", "zapatos", "靴"},
       {{"sneakers", "zapatillas", "スニーカー"}, {"boots", "botas", "ブーツ"}},
       {{"laces", "cordones", "靴紐"}, {"insoles", "plantillas", "インソール"}}},
      {{"headphones", "auriculares", "ヘッドホン"},
       {{"earbuds", "cascos", "イヤホン"}, {"speaker", "altavoz", "スピーカー"}},
       {{"earpads", "almohadillas", "イヤーパッド"}, {"cable", "cable", "ケーブル"}}},
      {{"phone", "teléfono", "スマホ"},
       {{"smartphone", "móvil", "携帯電話"}},
       {{"case", "funda", "ケース"}, {"charger", "cargador", "充電器"}}},
      {{"laptop", "portátil", "ノートパソコン"},
       {{"notebook", "ordenador", "パソコン"}, {"tablet", "tableta", "タブレット"}},
       {{"sleeve", "estuche", "スリーブ"}, {"mouse", "ratón", "マウス"}}},
      {{"backpack", "mochila", "リュック"},
       {{"daypack", "morral", "デイパック"}, {"duffel", "bolsa", "ダッフル"}},
       {{"raincover", "cubierta", "レインカバー"}}},
      {{"watch", "reloj", "腕時計"},
       {{"smartwatch", "smartwatch", "スマートウォッチ"}, {"tracker", "pulsera", "トラッカー"}},
       {{"strap", "correa", "ベルト"}}},
      {{"camera", "cámara", "カメラ"},
       {{"camcorder", "videocámara", "ビデオカメラ"}},
       {{"tripod", "trípode", "三脚"}, {"memorycard", "tarjeta", "メモリーカード"}}},
      {{"coffeemaker", "cafetera", "コーヒーメーカー"},
       {{"espresso", "expreso", "エスプレッソ"}, {"kettle", "hervidor", "ケトル"}},
       {{"filters", "filtros", "フィルター"}}},
      {{"blender", "licuadora", "ミキサー"},
       {{"juicer", "exprimidor", "ジューサー"}},
       {{"jar", "vaso", "ジャー"}}},
      {{"jacket", "chaqueta", "ジャケット"},
       {{"coat", "abrigo", "コート"}, {"parka", "parka", "パーカー"}},
       {{"hanger", "percha", "ハンガー"}}},
      {{"tent", "tienda", "テント"},
       {{"hammock", "hamaca", "ハンモック"}},
       {{"stakes", "estacas", "ペグ"}}},
      {{"bicycle", "bicicleta", "自転車"},
       {{"scooter", "patinete", "スクーター"}},
       {{"helmet", "casco", "ヘルメット"}, {"lock", "candado", "ロック"}}},
      {{"guitar", "guitarra", "ギター"},
       {{"ukulele", "ukelele", "ウクレレ"}},
       {{"strings", "cuerdas", "弦"}, {"picks", "púas", "ピック"}}},
      {{"printer", "impresora", "プリンター"},
       {{"scanner", "escáner", "スキャナー"}},
       {{"ink", "tinta", "インク"}, {"paper", "papel", "用紙"}}},
      {{"lamp", "lámpara", "ランプ"},
       {{"lantern", "farol", "ランタン"}},
       {{"bulb", "bombilla", "電球"}}},
      {{"keyboard", "teclado", "キーボード"},
       {{"keypad", "numérico", "テンキー"}},
       {{"keycaps", "teclas", "キーキャップ"}}},
  };
  return kCategories;
}

// Products that never answer any generated query.
const std::vector<Word>& unrelated() {
  static const std::vector<Word> kUnrelated = {
      {"stapler", "grapadora", "ホッチキス"}, {"vase", "jarrón", "花瓶"},
      {"towel", "toalla", "タオル"},          {"candle", "vela", "キャンドル"},
      {"puzzle", "rompecabezas", "パズル"},   {"rug", "alfombra", "ラグ"},
      {"mirror", "espejo", "鏡"},             {"scarf", "bufanda", "マフラー"},
      {"shampoo", "champú", "シャンプー"},    {"notepad", "libreta", "メモ帳"},
      {"frame", "marco", "額縁"},             {"spatula", "espátula", "ヘラ"},
  };
  return kUnrelated;
}

const std::vector<Word>& colors() {
  static const std::vector<Word> kColors = {
      {"black", "negro", "黒"},     {"white", "blanco", "白"},    {"red", "rojo", "赤"},
      {"blue", "azul", "青"},       {"green", "verde", "緑"},     {"gray", "gris", "グレー"},
      {"pink", "rosa", "ピンク"},   {"yellow", "amarillo", "黄色"}, {"brown", "marrón", "茶色"},
      {"purple", "morado", "紫"},   {"silver", "plata", "シルバー"}, {"navy", "marino", "ネイビー"},
  };
  return kColors;
}

const std::vector<Word>& attributes() {
  static const std::vector<Word> kAttributes = {
      {"waterproof", "impermeable", "防水"}, {"wireless", "inalámbrico", "ワイヤレス"},
      {"portable", "portátil", "ポータブル"},  {"large", "grande", "大きい"},
      {"small", "pequeño", "小さい"},          {"premium", "premium", "高級"},
      {"lightweight", "ligero", "軽量"},       {"classic", "clásico", "クラシック"},
      {"kids", "niños", "キッズ"},             {"professional", "profesional", "プロ"},
      {"compact", "compacto", "コンパクト"},   {"ergonomic", "ergonómico", "人間工学"},
  };
  return kAttributes;
}

const std::vector<std::string_view>& brands() {
  static const std::vector<std::string_view> kBrands = {
      "Acme",    "Nordwind", "Kestrel", "Solvia",  "Brightline", "Tamaki",  "Orrin",
      "Velto",   "Quonset",  "Lumora",  "Haskel",  "Zephra",     "Marlow",  "Pinnacle",
      "Corvid",  "Ardent",   "Sylvan",  "Tessaro", "Yuzen",      "Bramble", "Castell",
      "Dunmore", "Eldor",    "Fennic",  "Garrow",  "Hollis",     "Istra",   "Jorvik",
      "Kaleo",   "Lindqvist", "Miravel", "Nestra", "Ostrava",   "Pallas",  "Quill",
      "Rensho",  "Sabrel",   "Torvane", "Umbra",   "Valdris"};
  return kBrands;
}

const std::array<std::vector<std::string_view>, 3>& fillers() {
  static const std::array<std::vector<std::string_view>, 3> kFillers = {{
      {"new", "quality", "with", "and", "durable", "design", "easy", "use", "home", "daily",
       "gift", "perfect", "great", "value", "pack", "set", "model", "version", "style", "comfort"},
      {"nuevo", "calidad", "con", "y", "duradero", "diseño", "fácil", "uso", "casa", "diario",
       "regalo", "perfecto", "gran", "valor", "paquete", "juego", "modelo", "versión", "estilo",
       "comodidad"},
      {"新品", "高品質", "付き", "と", "耐久性", "デザイン", "簡単", "使用", "家庭", "毎日",
       "ギフト", "最適", "人気", "お得", "パック", "セット", "モデル", "バージョン", "スタイル",
       "快適"},
  }};
  return kFillers;
}

constexpr std::array<std::string_view, 3> kForWord = {"for", "para", "用"};

class Generator {
 public:
  Generator(std::uint64_t seed, const LabelVector& priors) : rng_(seed), priors_(priors) {}

  Dataset run(std::size_t n) {
    Dataset data;
    data.reserve(n);
    std::size_t query_index = 0;
    while (data.size() < n) {
      const std::size_t remaining = n - data.size();
      std::size_t group = kMinGroup + rng_.below(kMaxGroup - kMinGroup + 1);
      group = std::min(group, remaining);
      if (remaining - group == 1) group = group < kMaxGroup ? group + 1 : group - 1;
      emit_query(query_index++, group, data);
    }
    return data;
  }

 private:
  struct QueryIntent {
    std::size_t locale;
    std::size_t category;
    std::size_t attribute;
    std::size_t brand;
    std::size_t color;
    bool has_attribute;
    bool has_brand;
    bool has_color;
  };

  template <typename T>
  std::size_t pick(const std::vector<T>& v) {
    return rng_.below(v.size());
  }

  template <typename T>
  std::size_t pick_other(const std::vector<T>& v, std::size_t not_this) {
    const std::size_t k = rng_.below(v.size() - 1);
    return k >= not_this ? k + 1 : k;
  }

  EsciLabel draw_label() {
    const double u = rng_.uniform() * priors_.sum();
    double acc = 0.0;
    for (std::size_t c = 0; c + 1 < kNumClasses; ++c) {
      acc += priors_[c];
      if (u < acc) return kAllLabels[c];
    }
    return EsciLabel::kIrrelevant;
  }

  std::size_t draw_locale() {
    const double u = rng_.uniform();
    if (u < 0.545) return 0;
    if (u < 0.545 + 0.265) return 2;
    return 1;
  }

  void add_fillers(std::string& text, std::size_t locale, std::size_t count) {
    const auto& pool = fillers()[locale];
    for (std::size_t i = 0; i < count; ++i) {
      if (!text.empty()) text += ' ';
      text += pool[pick(pool)];
    }
  }

  static void append(std::string& text, std::string_view word) {
    if (!text.empty()) text += ' ';
    text += word;
  }

  void emit_query(std::size_t query_index, std::size_t group, Dataset& out) {
    QueryIntent q;
    q.locale = draw_locale();
    q.category = pick(categories());
    q.attribute = pick(attributes());
    q.brand = pick(brands());
    q.color = pick(colors());
    q.has_attribute = rng_.bernoulli(0.8);
    q.has_brand = rng_.bernoulli(0.7);
    q.has_color = rng_.bernoulli(0.6);
    if (!q.has_attribute && !q.has_brand && !q.has_color) q.has_brand = true;

    const std::size_t loc = q.locale;
    std::string query;
    if (q.has_brand && rng_.bernoulli(0.5)) append(query, brands()[q.brand]);
    if (q.has_attribute) append(query, attributes()[q.attribute][loc]);
    append(query, categories()[q.category].noun[loc]);
    if (q.has_color) append(query, colors()[q.color][loc]);
    if (q.has_brand && query.find(brands()[q.brand]) == std::string::npos) {
      append(query, brands()[q.brand]);
    }

    const std::string query_id = fmt::format("q{:06d}", query_index);
    for (std::size_t i = 0; i < group; ++i) {
      const EsciLabel truth = draw_label();
      QueryProductRecord r = make_product(q, truth);
      r.query_id = query_id;
      r.product_id = fmt::format("B{:06d}{:02d}", query_index, i);
      r.query = query;
      r.locale = static_cast<Locale>(loc);
      r.label = rng_.bernoulli(kLabelNoise) ? draw_label() : truth;
      out.push_back(std::move(r));
    }
  }

  QueryProductRecord make_product(const QueryIntent& q, EsciLabel truth) {
    const std::size_t loc = q.locale;
    const Category& cat = categories()[q.category];
    std::size_t attribute = q.attribute;
    std::size_t brand = q.brand;
    std::size_t color = q.color;
    std::string_view noun = cat.noun[loc];
    switch (truth) {
      case EsciLabel::kExact:
        break;
      case EsciLabel::kSubstitute:
        noun = cat.substitutes[pick(cat.substitutes)][loc];
        brand = pick_other(brands(), q.brand);
        color = pick_other(colors(), q.color);
        break;
      case EsciLabel::kComplement:
        brand = pick_other(brands(), q.brand);
        break;
      case EsciLabel::kIrrelevant:
        noun = unrelated()[pick(unrelated())][loc];
        attribute = pick(attributes());
        brand = pick_other(brands(), q.brand);
        color = pick(colors());
        break;
    }

    QueryProductRecord r;
    r.brand = brands()[brand];
    r.color = colors()[color][loc];
    append(r.title, r.brand);
    if (truth == EsciLabel::kComplement) {
      append(r.title, cat.accessories[pick(cat.accessories)][loc]);
      append(r.title, kForWord[loc]);
      append(r.title, noun);
    } else {
      append(r.title, attributes()[attribute][loc]);
      append(r.title, noun);
      append(r.title, r.color);
    }
    add_fillers(r.bullet_points, loc, 1 + rng_.below(2));
    add_fillers(r.description, loc, 2 + rng_.below(3));
    return r;
  }

  Rng rng_;
  LabelVector priors_;
};

}  // namespace

Dataset generate_synthetic(std::size_t n, std::uint64_t seed, const LabelVector& label_priors) {
  if (n < 1) throw ArgumentError("generate_synthetic: n must be at least 1");
  for (double p : label_priors.p) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw ArgumentError("generate_synthetic: label priors must be non-negative");
    }
  }
  if (!(label_priors.sum() > 0.0)) {
    throw ArgumentError("generate_synthetic: label priors must not all be zero");
  }
  return Generator(seed, label_priors).run(n);
}

}  // namespace esci
