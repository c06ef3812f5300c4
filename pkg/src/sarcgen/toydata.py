"""Synthetic corpora for desk-scale runs and tests.

synthetic_records builds a small plausible comment corpus whose texts reuse
the bundled replacement lexicon's vocabulary (so augmentation has traction);
separable_records builds the diagnostic fixture whose label is fully
determined by the sarcasm-rate feature with a margin around the threshold,
while every other field is label-independent noise.
"""

from __future__ import annotations

import random

from .corpus import CommentRecord, Hierarchy, Label, Topic, UserBehavior

TOPIC_WORDS = {
    Topic.LIFESTYLE: ["天气", "吃饭", "生活", "餐厅", "东西", "便宜", "地方"],
    Topic.POLITICS: ["政策", "专家", "城市", "交通", "房价", "问题", "办法"],
    Topic.ENTERTAINMENT: ["电影", "明星", "节目", "演员", "剧情", "音乐", "游戏"],
    Topic.RELATIONSHIPS: ["朋友", "孩子", "幸福", "开心", "快乐", "学校"],
    Topic.PUBLIC_INCIDENTS: ["救援", "新闻", "网友", "评论", "辛苦", "老板"],
}
ADJECTIVES = ["精彩", "无聊", "厉害", "好看", "漂亮", "聪明", "辛苦", "便宜"]
SARCASTIC_TAILS = ["真是绝了", "可真行", "佩服佩服", "真值了", "太感人了"]
PLAIN_TAILS = ["挺好的", "还不错", "一般般", "可以理解", "就这样吧"]
CONTEXTS = ["原帖讨论最近的热点", "楼主分享了一段经历", "新闻报道引发争议", "大家在聊日常琐事"]

RANDOM_CHARS = "山水风云花草树木星月雷电春夏秋冬东南西北红黄蓝绿金银铜铁"


def _behavior(rng: random.Random, label: Label, topic: Topic) -> UserBehavior:
    weights = [rng.uniform(0.5, 1.5) for _ in Topic]
    weights[list(Topic).index(topic)] += rng.uniform(0.5, 2.0)
    total = sum(weights)
    if label is Label.SARCASTIC:
        sarcasm_rate = rng.uniform(0.55, 0.95)
    else:
        sarcasm_rate = rng.uniform(0.05, 0.45)
    return UserBehavior(
        comment_count=rng.randint(3, 2000),
        topic_distribution=tuple(w / total for w in weights),
        sarcasm_rate=sarcasm_rate,
        comment_frequency=round(rng.uniform(0.05, 20.0), 3),
        reply_ratio=round(rng.uniform(0.0, 1.0), 3),
    )


def synthetic_records(
    n: int, seed: int = 0, with_behavior: bool = True, behavior_fraction: float = 1.0
) -> list[CommentRecord]:
    """n labeled comments over all topics; texts built from lexicon words."""
    rng = random.Random(seed)
    out = []
    for i in range(n):
        label = Label.SARCASTIC if i % 2 == 0 else Label.NON_SARCASTIC
        topic = rng.choice(list(Topic))
        hierarchy = rng.choice(list(Hierarchy))
        words = TOPIC_WORDS[topic]
        w1, w2 = rng.sample(words, 2)
        adj = rng.choice(ADJECTIVES)
        tail = rng.choice(SARCASTIC_TAILS if label is Label.SARCASTIC else PLAIN_TAILS)
        template = rng.randrange(4)
        if template == 0:
            text = f"这{w1}真{adj}{tail}"
        elif template == 1:
            text = f"{w1}和{w2}都{adj}"
        elif template == 2:
            text = f"大家都说{w1}{adj}{tail}"
        else:
            text = f"{w1}让人觉得{adj}"
        behavior = None
        if with_behavior and rng.random() < behavior_fraction:
            behavior = _behavior(rng, label, topic)
        out.append(
            CommentRecord(
                id=f"syn-{i:05d}",
                text=text,
                label=label,
                topic=topic,
                hierarchy=hierarchy,
                context=rng.choice(CONTEXTS) if hierarchy is Hierarchy.NESTED else None,
                behavior=behavior,
                provenance="seed",
            )
        )
    return out


def separable_records(n: int, seed: int = 0, margin: float = 0.3) -> list[CommentRecord]:
    """Fixture where label == sarcastic iff sarcasm_rate > 0.5, margin-separated.

    Text, topic, hierarchy and the remaining behavior features carry no label
    signal, so dropping the sarcasm-rate column removes the only signal.
    """
    rng = random.Random(seed)
    half_gap = margin / 2
    out = []
    for i in range(n):
        sarcastic = i % 2 == 0
        if sarcastic:
            rate = rng.uniform(0.5 + half_gap, 1.0)
        else:
            rate = rng.uniform(0.0, 0.5 - half_gap)
        weights = [rng.uniform(0.1, 1.0) for _ in Topic]
        total = sum(weights)
        behavior = UserBehavior(
            comment_count=rng.randint(0, 500),
            topic_distribution=tuple(w / total for w in weights),
            sarcasm_rate=rate,
            comment_frequency=rng.uniform(0.0, 10.0),
            reply_ratio=rng.uniform(0.0, 1.0),
        )
        out.append(
            CommentRecord(
                id=f"fix-{i:05d}",
                text="".join(rng.choices(RANDOM_CHARS, k=rng.randint(5, 14))),
                label=Label.SARCASTIC if sarcastic else Label.NON_SARCASTIC,
                topic=rng.choice(list(Topic)),
                hierarchy=rng.choice(list(Hierarchy)),
                behavior=behavior,
            )
        )
    return out
